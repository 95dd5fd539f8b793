use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sketchreg::dantzig::DantzigMethod;
use sketchreg::experiment::{
    gen_synthetic, parse_list, read_config, run_sweep, DataSource, ExperimentConfig, SigmaUnit, SweepAxis,
    SyntheticSpec,
};
use sketchreg::matrix::{write_csv, write_libsvm};
use sketchreg::pipeline::{
    compress, diagnose, sigma_auto, solve_compressed, solve_original, DiagnoseOptions, Formulation, SketchParams,
};
use sketchreg::{SketchFamily, SolverResult};

#[derive(Parser)]
#[command(name = "sketchreg", version, about = "Sparse least squares on sketched data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Gen(GenArgs),
    /// Solve one elastic net or lasso problem, compressed unless --original.
    Solve(SolveArgs),
    /// Solve the Dantzig selector, compressed unless --original.
    Dantzig(SolveArgs),
    /// Sweep sigma at fixed m and write CSV.
    SweepSigma(SweepArgs),
    /// Sweep m (and sigma) and write CSV.
    SweepM(SweepArgs),
    /// Report q, eta, rho, restricted eigenvalues and errors for one sketch.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Read the design and target from a libsvm file.
    #[arg(long, value_name = "PATH", conflicts_with = "csv")]
    libsvm: Option<PathBuf>,
    /// Number of features for --libsvm (default: largest index seen).
    #[arg(long, requires = "libsvm")]
    libsvm_d: Option<usize>,
    /// Read a dense CSV whose last column is the target.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Synthetic rows.
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic features.
    #[arg(long)]
    d: Option<usize>,
    /// Synthetic nonzeros of the true coefficient vector.
    #[arg(long = "s-true")]
    s_true: Option<usize>,
    /// Synthetic noise half-width.
    #[arg(long)]
    noise: Option<f64>,
    /// Seed of the synthetic data (independent of the sketch seed).
    #[arg(long)]
    data_seed: Option<u64>,
    /// Keep synthetic entries in [-1, 1] instead of variance 1/n.
    #[arg(long)]
    no_scale: bool,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key = value file; command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<SketchFamily>,
    /// Sketch rows.
    #[arg(long)]
    m: Option<usize>,
    /// Sketch seed (base seed for sweeps).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    formulation: Option<Formulation>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// A number, or `auto` for the theory value with a data-driven eta.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Dantzig solver: admm or interior_point.
    #[arg(long)]
    dantzig_method: Option<DantzigMethod>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Solve the uncompressed problem.
    #[arg(long)]
    original: bool,
    /// Multiplier for `--sigma auto`.
    #[arg(long, default_value_t = 1.0)]
    sigma_multiplier: f64,
    /// Include every coefficient, not only the support.
    #[arg(long)]
    dense_output: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated sigma values.
    #[arg(long)]
    sigma_grid: Option<String>,
    #[arg(long)]
    sigma_unit: Option<SigmaUnitArg>,
    /// Comma-separated sketch sizes.
    #[arg(long)]
    m_grid: Option<String>,
    /// Comma-separated tau values.
    #[arg(long)]
    tau_grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Fill the wall-clock columns (output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sparsity level for rho and the restricted eigenvalues.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, default_value_t = 200)]
    rho_trials: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma_multiplier: f64,
    /// Skip the original solve; only sketch-side quantities are reported.
    #[arg(long)]
    no_original: bool,
    /// Include the full q vector.
    #[arg(long)]
    keep_q: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[command(flatten)]
    data: DataArgs,
    /// Seed (alias of --data-seed).
    #[arg(long, conflicts_with = "data_seed")]
    seed: Option<u64>,
    /// Output format; defaults to csv for a `.csv` path and libsvm otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Also write the true coefficients, one per line.
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Libsvm,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaUnitArg {
    Absolute,
    Theory,
}

enum SigmaChoice {
    Value(f64),
    Auto,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a, None),
        Command::Dantzig(a) => cmd_solve(a, Some(Formulation::Dantzig)),
        Command::SweepSigma(a) => cmd_sweep(a, ExperimentConfig::desk_sigma()),
        Command::SweepM(a) => cmd_sweep(a, ExperimentConfig::desk_m()),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let mut out = open_out(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn synthetic_override(base: SyntheticSpec, a: &DataArgs) -> Option<SyntheticSpec> {
    let touched = a.n.is_some()
        || a.d.is_some()
        || a.s_true.is_some()
        || a.noise.is_some()
        || a.data_seed.is_some()
        || a.no_scale;
    touched.then(|| SyntheticSpec {
        n: a.n.unwrap_or(base.n),
        d: a.d.unwrap_or(base.d),
        s_true: a.s_true.unwrap_or(base.s_true),
        noise_mag: a.noise.unwrap_or(base.noise_mag),
        seed: a.data_seed.unwrap_or(base.seed),
        scale_to_var_1_over_n: base.scale_to_var_1_over_n && !a.no_scale,
    })
}

/// Defaults, then `--config`, then flags. Returns the `sigma` setting, which
/// only single solves use.
fn build_config(mut cfg: ExperimentConfig, c: &CommonArgs) -> Result<(ExperimentConfig, Option<SigmaChoice>)> {
    let mut sigma = None;
    if let Some(path) = &c.config {
        let mut file = read_config(path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(v) = file.remove("sigma") {
            sigma = Some(parse_sigma(&v)?);
        }
        cfg.apply_config(&file)
            .with_context(|| format!("applying {}", path.display()))?;
    }
    if let Some(f) = c.family {
        cfg.family = f;
    }
    if let Some(m) = c.m {
        cfg.m_grid = vec![m];
    }
    if let Some(s) = c.seed {
        cfg.base_seed = s;
    }
    if let Some(f) = c.formulation {
        cfg.spec.formulation = f;
        if f == Formulation::Lasso {
            cfg.spec.lambda = 0.0;
        }
    }
    if let Some(v) = c.lambda {
        cfg.spec.lambda = v;
    }
    if let Some(v) = c.tau {
        cfg.tau_grid = vec![v];
    }
    if let Some(v) = c.delta {
        cfg.spec.delta = v;
    }
    if let Some(v) = c.tol {
        cfg.solve.solver.tol = v;
        cfg.solve.dantzig.tol = v;
    }
    if let Some(v) = c.max_epochs {
        cfg.solve.solver.max_epochs = v;
        cfg.solve.dantzig.max_iters = v;
    }
    if let Some(v) = c.dantzig_method {
        cfg.solve.dantzig.method = v;
    }
    if let Some(v) = c.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = &c.sigma {
        sigma = Some(parse_sigma(v)?);
    }
    let a = &c.data;
    if let Some(path) = &a.libsvm {
        cfg.data = DataSource::Libsvm {
            path: path.clone(),
            d: a.libsvm_d,
        };
    } else if let Some(path) = &a.csv {
        cfg.data = DataSource::Csv { path: path.clone() };
    } else {
        let base = match &cfg.data {
            DataSource::Synthetic(s) => *s,
            _ => SyntheticSpec::desk(0),
        };
        if let Some(s) = synthetic_override(base, a) {
            cfg.data = DataSource::Synthetic(s);
        }
    }
    Ok((cfg, sigma))
}

fn parse_sigma(text: &str) -> Result<SigmaChoice> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("auto") {
        return Ok(SigmaChoice::Auto);
    }
    let v: f64 = text
        .parse()
        .with_context(|| format!("sigma {text:?} is neither a number nor `auto`"))?;
    Ok(SigmaChoice::Value(v))
}

fn single<T: Copy + std::fmt::Debug>(name: &str, grid: &[T]) -> Result<T> {
    match grid {
        [v] => Ok(*v),
        _ => bail!("{name} must be a single value here, got {grid:?}"),
    }
}

fn support_json(w: &[f64], dense: bool) -> Value {
    if dense {
        json!(w)
    } else {
        let pairs: Vec<Value> = w
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| json!([j, v]))
            .collect();
        json!(pairs)
    }
}

fn result_json(res: &SolverResult, dense: bool) -> Value {
    json!({
        "objective": res.objective,
        "epochs": res.epochs,
        "converged": res.converged,
        "certificate": res.certificate,
        "support_size": res.support_size,
        "kappa": res.kappa,
        "w": support_json(&res.w, dense),
    })
}

fn cmd_solve(a: SolveArgs, force: Option<Formulation>) -> Result<()> {
    let (mut cfg, sigma) = build_config(ExperimentConfig::desk_sigma(), &a.common)?;
    if let Some(f) = force {
        cfg.spec.formulation = f;
    }
    let tau = single("tau", &cfg.tau_grid)?;
    let m = single("m", &cfg.m_grid)?;
    let mut spec = cfg.spec;
    spec.tau = tau;
    spec.sigma = 0.0;
    spec.validate()?;
    let (x, y) = cfg.data.load()?;
    let n = x.n();

    let mut out = json!({
        "n": n,
        "d": x.d(),
        "formulation": spec.formulation.as_str(),
        "lambda": spec.lambda,
        "tau": spec.tau,
    });
    let res;
    let start = Instant::now();
    if a.original {
        res = solve_original(&x, &y, &spec, &cfg.solve, None)?;
        out["mode"] = json!("original");
    } else {
        let sketch = SketchParams::new(cfg.family, m, cfg.base_seed);
        let data = compress(&x, &y, &sketch)?;
        spec.sigma = match sigma {
            None => 0.0,
            Some(SigmaChoice::Value(v)) => v,
            Some(SigmaChoice::Auto) => sigma_auto(&data, x.col_norm_bound(), n, &spec, &cfg.solve, a.sigma_multiplier)?,
        };
        spec.validate()?;
        res = solve_compressed(&data, n, &spec, &cfg.solve, None)?;
        out["mode"] = json!("compressed");
        out["family"] = json!(cfg.family.as_str());
        out["m"] = json!(m);
        out["seed"] = json!(cfg.base_seed);
        out["sigma"] = json!(spec.sigma);
    }
    out["wall_ms"] = json!(start.elapsed().as_secs_f64() * 1e3);
    out["result"] = result_json(&res, a.dense_output);
    if !res.converged {
        eprintln!("warning: solver stopped before reaching the tolerance");
    }
    write_json(a.common.out.as_deref(), &out)
}

fn cmd_sweep(a: SweepArgs, base: ExperimentConfig) -> Result<()> {
    let (mut cfg, sigma) = build_config(base, &a.common)?;
    match sigma {
        Some(SigmaChoice::Value(v)) => {
            cfg.sigma_grid = vec![v];
            cfg.sigma_unit = SigmaUnit::Absolute;
        }
        Some(SigmaChoice::Auto) => bail!("sweeps take --sigma-grid; `auto` applies to single solves"),
        None => {}
    }
    if let Some(g) = &a.sigma_grid {
        cfg.sigma_grid = parse_list(g).map_err(|e| anyhow::anyhow!("--sigma-grid: {e}"))?;
    }
    if let Some(u) = a.sigma_unit {
        cfg.sigma_unit = match u {
            SigmaUnitArg::Absolute => SigmaUnit::Absolute,
            SigmaUnitArg::Theory => SigmaUnit::Theory,
        };
    }
    if let Some(g) = &a.m_grid {
        cfg.m_grid = parse_list(g).map_err(|e| anyhow::anyhow!("--m-grid: {e}"))?;
    }
    if let Some(g) = &a.tau_grid {
        cfg.tau_grid = parse_list(g).map_err(|e| anyhow::anyhow!("--tau-grid: {e}"))?;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if a.timing {
        cfg.timing = true;
    }
    if cfg.axis == SweepAxis::Sigma && cfg.m_grid.len() > 1 {
        cfg.axis = SweepAxis::M;
    }
    cfg.validate()?;
    let res = run_sweep(&cfg)?;
    let mut out = open_out(a.common.out.as_deref())?;
    res.write_csv(&mut out)?;
    out.flush()?;
    for row in res.best_per_m() {
        eprintln!(
            "m={} tau={:e}: best mean err_l2 {:.6e} at sigma {:.6e}",
            row.m,
            row.tau,
            row.err_l2.unwrap_or(f64::NAN),
            row.sigma.unwrap_or(f64::NAN)
        );
    }
    let failed = res.rows.iter().filter(|r| r.status.starts_with("error")).count();
    if failed > 0 {
        eprintln!("warning: {failed} cells failed; see the status column");
    }
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    let (cfg, sigma) = build_config(ExperimentConfig::desk_sigma(), &a.common)?;
    let mut spec = cfg.spec;
    spec.tau = single("tau", &cfg.tau_grid)?;
    spec.sigma = match sigma {
        None => 0.0,
        Some(SigmaChoice::Value(v)) => v,
        Some(SigmaChoice::Auto) => bail!("diagnose takes an explicit --sigma"),
    };
    let m = single("m", &cfg.m_grid)?;
    let (x, y) = cfg.data.load()?;
    let sketch = SketchParams::new(cfg.family, m, cfg.base_seed);
    let dopts = DiagnoseOptions {
        s: a.s,
        rho_trials: a.rho_trials,
        sigma_multiplier: a.sigma_multiplier,
        with_original: !a.no_original,
        keep_q: a.keep_q,
    };
    let report = diagnose(&x, &y, &spec, &sketch, &cfg.solve, &dopts)?;
    if report.lambda_negative {
        eprintln!("warning: Lambda is negative; the error bound does not apply");
    }
    write_json(a.common.out.as_deref(), &serde_json::to_value(&report)?)
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut base = match a.preset {
        Preset::Desk => SyntheticSpec::desk(0),
        Preset::Full => SyntheticSpec::full(0),
    };
    if let Some(s) = a.seed {
        base.seed = s;
    }
    let spec = synthetic_override(base, &a.data).unwrap_or(base);
    let g = gen_synthetic(&spec)?;
    let format = a.format.unwrap_or_else(|| {
        if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Format::Csv
        } else {
            Format::Libsvm
        }
    });
    let mut out = open_out(Some(&a.out))?;
    match format {
        Format::Libsvm => write_libsvm(&mut out, &g.x, &g.y)?,
        Format::Csv => write_csv(&mut out, &g.x, &g.y)?,
    }
    out.flush()?;
    if let Some(path) = &a.truth {
        let mut t = open_out(Some(path))?;
        for v in &g.u_star {
            writeln!(t, "{v:e}")?;
        }
        t.flush()?;
    }
    eprintln!("wrote {} x {} ({} nonzeros in the truth)", spec.n, spec.d, spec.s_true);
    Ok(())
}
