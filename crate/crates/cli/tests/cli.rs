use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchreg"))
        .args(args)
        .output()
        .unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn small_data(dir: &Path, name: &str) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    let out = run(&[
        "gen", "--n", "120", "--d", "60", "--s-true", "5", "--seed", "3", "--out", &p,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn gen_writes_libsvm_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let svm = small_data(dir.path(), "a.svm");
    let csv = small_data(dir.path(), "a.csv");
    let svm_text = std::fs::read_to_string(svm).unwrap();
    let csv_text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(svm_text.lines().count(), 120);
    assert!(svm_text.lines().next().unwrap().contains(':'));
    let rows: Vec<&str> = csv_text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
        .collect();
    assert_eq!(rows.last().unwrap().split(',').count(), 61);
}

#[test]
fn solve_original_and_compressed() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), "d.svm");
    let base = ["--libsvm", &data, "--libsvm-d", "60", "--tau", "1e-3"];
    let orig = ok_json(&[&["solve", "--original"][..], &base].concat());
    assert_eq!(orig["mode"], "original");
    assert_eq!(orig["d"], 60);
    assert!(orig["result"]["converged"].as_bool().unwrap());

    let hat = ok_json(
        &[
            &["solve", "--m", "60", "--sigma", "auto", "--family", "gaussian"][..],
            &base,
        ]
        .concat(),
    );
    assert_eq!(hat["mode"], "compressed");
    assert_eq!(hat["m"], 60);
    assert!(hat["sigma"].as_f64().unwrap() > 0.0);

    let again = ok_json(
        &[
            &["solve", "--m", "60", "--sigma", "auto", "--family", "gaussian"][..],
            &base,
        ]
        .concat(),
    );
    assert_eq!(hat["result"]["w"], again["result"]["w"]);
}

#[test]
fn dantzig_methods() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), "d.csv");
    for method in ["admm", "interior_point"] {
        let v = ok_json(&[
            "dantzig",
            "--csv",
            &data,
            "--m",
            "80",
            "--sigma",
            "1e-3",
            "--tau",
            "1e-3",
            "--dantzig-method",
            method,
        ]);
        assert_eq!(v["formulation"], "dantzig");
        assert!(v["result"]["objective"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn sweep_sigma_writes_valid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let cfg = dir.path().join("s.cfg");
    std::fs::write(
        &cfg,
        "# small sweep\nsynth_n = 150\nsynth_d = 80\nsynth_s = 4\nm = 60\ntrials = 2\nsigma_grid = 0, 1, 4\n",
    )
    .unwrap();
    let args = [
        "sweep-sigma",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let r = run(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(sketchreg::experiment::validate_csv_schema(&text).unwrap(), 3 * 2 + 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("best mean err_l2"));

    assert!(run(&args).status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
}

#[test]
fn sweep_m_accepts_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let r = run(&[
        "sweep-m",
        "--n",
        "150",
        "--d",
        "80",
        "--s-true",
        "4",
        "--m-grid",
        "40,80",
        "--sigma-grid",
        "0,2",
        "--trials",
        "1",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(sketchreg::experiment::validate_csv_schema(&text).unwrap(), 4 + 4);
}

#[test]
fn diagnose_reports_q_and_eta() {
    let v = ok_json(&[
        "diagnose", "--n", "100", "--d", "40", "--s-true", "3", "--m", "50", "--sigma", "1e-3", "--tau", "1e-3", "--s",
        "2",
    ]);
    assert!(v["q_inf"].as_f64().unwrap() >= 0.0, "{v}");
    assert!(v["eta"].as_f64().unwrap() > 0.0, "{v}");
}

#[test]
fn bad_input_fails_cleanly() {
    for args in [
        &["solve", "--n", "5", "--d", "3", "--s-true", "10"][..],
        &["solve", "--sigma", "minus-one", "--n", "10", "--d", "5"][..],
        &["solve", "--libsvm", "/nonexistent/file.svm"][..],
        &["sweep-sigma", "--sigma-grid", "1,x", "--n", "10", "--d", "5"][..],
        &["solve", "--dantzig-method", "simplex"][..],
    ] {
        let r = run(args);
        assert!(!r.status.success(), "{args:?} succeeded");
        let err = String::from_utf8_lossy(&r.stderr);
        assert!(err.contains("error"), "{args:?}: {err}");
        assert!(!err.contains("panicked"), "{args:?}: {err}");
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "sigma_gird = 1\n").unwrap();
    let r = run(&["sweep-sigma", "--config", cfg.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("sigma_gird"));
}
