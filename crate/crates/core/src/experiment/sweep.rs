//! Grid sweeps over `(tau, m, sigma)` with several sketch seeds per point.
//!
//! The data set is fixed; the original problem is solved once per `tau`.
//! Each `(tau, m, trial)` cell draws one sketch (seed
//! `derive_seed(base_seed, trial)`) and walks the sigma grid from largest to
//! smallest with warm starts. Rows come out in grid order regardless of how
//! many threads ran the cells.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::Config;
use super::synth::{gen_synthetic, SyntheticSpec};
use crate::dantzig::{DantzigMethod, DantzigParams};
use crate::error::{Error, Result};
use crate::matrix::{check_len, fmt_f64, norm2, read_csv, read_libsvm, DesignMatrix};
use crate::pipeline::{
    compute_q_compressed, error_report, sigma_theoretical, solve_compressed, solve_original, Formulation, ProblemSpec,
    SketchParams, SolveOptions,
};
use crate::prox::{SolverParams, SolverResult};
use crate::rng::derive_seed;
use crate::sketch::SketchFamily;

/// Fixed sweep CSV header.
pub const CSV_HEADER: [&str; 18] = [
    "seed",
    "family",
    "m",
    "lambda",
    "tau",
    "sigma",
    "err_l1",
    "err_l2",
    "obj_hat",
    "obj_orig",
    "eta",
    "q_inf",
    "epochs_hat",
    "epochs_orig",
    "wall_ms_hat",
    "wall_ms_orig",
    "status",
    "err_l2_se",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Sigma,
    M,
    Tau,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sigma" => Ok(SweepAxis::Sigma),
            "m" => Ok(SweepAxis::M),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::invalid(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// How sigma grid values are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaUnit {
    Absolute,
    /// Multiples of `sigma_theoretical(eta, R, n, d, m, delta, 1)` with `eta`
    /// taken from the original solution.
    Theory,
}

impl FromStr for SigmaUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "absolute" => Ok(SigmaUnit::Absolute),
            "theory" => Ok(SigmaUnit::Theory),
            other => Err(Error::invalid(format!("unknown sigma unit {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Libsvm { path: PathBuf, d: Option<usize> },
    Csv { path: PathBuf },
}

impl DataSource {
    pub fn load(&self) -> Result<(DesignMatrix, Vec<f64>)> {
        match self {
            DataSource::Synthetic(spec) => {
                let g = gen_synthetic(spec)?;
                Ok((g.x, g.y))
            }
            DataSource::Libsvm { path, d } => {
                let (x, y) = read_libsvm(path, *d)?;
                Ok((x, y.into_inner()))
            }
            DataSource::Csv { path } => {
                let (x, y) = read_csv(path)?;
                Ok((x, y.into_inner()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub axis: SweepAxis,
    pub m_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub sigma_unit: SigmaUnit,
    pub family: SketchFamily,
    pub trials: usize,
    pub base_seed: u64,
    /// `tau` and `sigma` here are placeholders; the grids override them.
    pub spec: ProblemSpec,
    pub solve: SolveOptions,
    pub data: DataSource,
    pub jobs: usize,
    /// Fill the wall-clock columns. Off by default so output is reproducible.
    pub timing: bool,
}

/// Keys understood by [`ExperimentConfig::apply_config`].
pub const CONFIG_KEYS: &[&str] = &[
    "axis",
    "formulation",
    "lambda",
    "tau",
    "tau_grid",
    "sigma_grid",
    "sigma_unit",
    "m",
    "m_grid",
    "family",
    "trials",
    "seed",
    "delta",
    "tol",
    "max_epochs",
    "lasso_lambda_eps",
    "dantzig_tol",
    "dantzig_max_iters",
    "dantzig_method",
    "jobs",
    "timing",
    "data",
    "data_path",
    "libsvm_d",
    "synth_n",
    "synth_d",
    "synth_s",
    "synth_noise",
    "synth_seed",
    "synth_scale",
];

impl ExperimentConfig {
    /// Desk-scale lasso sigma sweep: `n = 2000`, `d = 10^4`, 50 nonzeros,
    /// CountSketch with `m = 500`, `tau = 1e-5`.
    pub fn desk_sigma() -> Self {
        Self {
            axis: SweepAxis::Sigma,
            m_grid: vec![500],
            tau_grid: vec![1e-5],
            sigma_grid: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            sigma_unit: SigmaUnit::Theory,
            family: SketchFamily::CountSketch,
            trials: 10,
            base_seed: 0,
            spec: ProblemSpec {
                lambda: 0.0,
                tau: 1e-5,
                sigma: 0.0,
                delta: 0.05,
                formulation: Formulation::Lasso,
            },
            solve: SolveOptions {
                solver: SolverParams {
                    tol: 1e-7,
                    max_epochs: 5000,
                    seed: 0,
                },
                ..SolveOptions::default()
            },
            data: DataSource::Synthetic(SyntheticSpec::desk(0)),
            jobs: 1,
            timing: false,
        }
    }

    /// Desk-scale m sweep over `{250, 500, 1000, 2000}`.
    pub fn desk_m() -> Self {
        Self {
            axis: SweepAxis::M,
            m_grid: vec![250, 500, 1000, 2000],
            trials: 20,
            ..Self::desk_sigma()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() || self.tau_grid.is_empty() || self.sigma_grid.is_empty() {
            return Err(Error::Config("sweep grids must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.m_grid.contains(&0) {
            return Err(Error::Config("m must be positive".into()));
        }
        for &t in &self.tau_grid {
            ProblemSpec {
                tau: t,
                sigma: 0.0,
                ..self.spec
            }
            .validate()?;
        }
        if self.sigma_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("sigma grid values must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Overrides fields from `key = value` pairs. Unknown keys are errors.
    pub fn apply_config(&mut self, c: &Config) -> Result<()> {
        c.check_keys(CONFIG_KEYS)?;
        if let Some(v) = c.parse::<SweepAxis>("axis")? {
            self.axis = v;
        }
        if let Some(v) = c.parse::<Formulation>("formulation")? {
            self.spec.formulation = v;
            if v == Formulation::Lasso {
                self.spec.lambda = 0.0;
            }
        }
        if let Some(v) = c.parse::<f64>("lambda")? {
            self.spec.lambda = v;
        }
        if let Some(v) = c.parse::<f64>("tau")? {
            self.tau_grid = vec![v];
        }
        if let Some(v) = c.parse_list::<f64>("tau_grid")? {
            self.tau_grid = v;
        }
        if let Some(v) = c.parse_list::<f64>("sigma_grid")? {
            self.sigma_grid = v;
        }
        if let Some(v) = c.parse::<SigmaUnit>("sigma_unit")? {
            self.sigma_unit = v;
        }
        if let Some(v) = c.parse::<usize>("m")? {
            self.m_grid = vec![v];
        }
        if let Some(v) = c.parse_list::<usize>("m_grid")? {
            self.m_grid = v;
        }
        if let Some(v) = c.parse::<SketchFamily>("family")? {
            self.family = v;
        }
        if let Some(v) = c.parse::<usize>("trials")? {
            self.trials = v;
        }
        if let Some(v) = c.parse::<u64>("seed")? {
            self.base_seed = v;
        }
        if let Some(v) = c.parse::<f64>("delta")? {
            self.spec.delta = v;
        }
        if let Some(v) = c.parse::<f64>("tol")? {
            self.solve.solver.tol = v;
        }
        if let Some(v) = c.parse::<usize>("max_epochs")? {
            self.solve.solver.max_epochs = v;
        }
        if let Some(v) = c.parse::<f64>("lasso_lambda_eps")? {
            self.solve.lasso_lambda_eps = v;
        }
        if let Some(v) = c.parse::<f64>("dantzig_tol")? {
            self.solve.dantzig = DantzigParams {
                tol: v,
                ..self.solve.dantzig
            };
        }
        if let Some(v) = c.parse::<usize>("dantzig_max_iters")? {
            self.solve.dantzig.max_iters = v;
        }
        if let Some(v) = c.parse::<DantzigMethod>("dantzig_method")? {
            self.solve.dantzig.method = v;
        }
        if let Some(v) = c.parse::<usize>("jobs")? {
            self.jobs = v;
        }
        if let Some(v) = c.parse::<bool>("timing")? {
            self.timing = v;
        }
        let path = c.get("data_path").map(PathBuf::from);
        let synth_keys = c.keys().any(|k| k.starts_with("synth_"));
        match c.get("data") {
            None if !synth_keys => {}
            None | Some("synthetic") => {
                let mut s = match &self.data {
                    DataSource::Synthetic(s) => *s,
                    _ => SyntheticSpec::desk(0),
                };
                if let Some(v) = c.parse("synth_n")? {
                    s.n = v;
                }
                if let Some(v) = c.parse("synth_d")? {
                    s.d = v;
                }
                if let Some(v) = c.parse("synth_s")? {
                    s.s_true = v;
                }
                if let Some(v) = c.parse("synth_noise")? {
                    s.noise_mag = v;
                }
                if let Some(v) = c.parse("synth_seed")? {
                    s.seed = v;
                }
                if let Some(v) = c.parse("synth_scale")? {
                    s.scale_to_var_1_over_n = v;
                }
                self.data = DataSource::Synthetic(s);
            }
            Some("libsvm") => {
                let path = path.ok_or_else(|| Error::Config("data = libsvm needs data_path".into()))?;
                self.data = DataSource::Libsvm {
                    path,
                    d: c.parse("libsvm_d")?,
                };
            }
            Some("csv") => {
                let path = path.ok_or_else(|| Error::Config("data = csv needs data_path".into()))?;
                self.data = DataSource::Csv { path };
            }
            Some(other) => return Err(Error::Config(format!("unknown data source {other:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Sketch seed; `None` marks an aggregate row.
    pub seed: Option<u64>,
    pub family: SketchFamily,
    pub m: usize,
    pub lambda: f64,
    pub tau: f64,
    pub sigma: Option<f64>,
    pub err_l1: Option<f64>,
    pub err_l2: Option<f64>,
    pub obj_hat: Option<f64>,
    pub obj_orig: Option<f64>,
    pub eta: Option<f64>,
    pub q_inf: Option<f64>,
    pub epochs_hat: Option<f64>,
    pub epochs_orig: Option<f64>,
    pub wall_ms_hat: Option<f64>,
    pub wall_ms_orig: Option<f64>,
    pub status: String,
    /// Standard error of the mean `err_l2` (aggregate rows only).
    pub err_l2_se: Option<f64>,
}

impl SweepRow {
    pub fn is_aggregate(&self) -> bool {
        self.seed.is_none()
    }

    fn fields(&self) -> [String; 18] {
        let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        [
            self.seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".into()),
            self.family.to_string(),
            self.m.to_string(),
            fmt_f64(self.lambda),
            fmt_f64(self.tau),
            f(self.sigma),
            f(self.err_l1),
            f(self.err_l2),
            f(self.obj_hat),
            f(self.obj_orig),
            f(self.eta),
            f(self.q_inf),
            f(self.epochs_hat),
            f(self.epochs_orig),
            f(self.wall_ms_hat),
            f(self.wall_ms_orig),
            self.status.clone(),
            f(self.err_l2_se),
        ]
    }
}

impl fmt::Display for SweepRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fields().join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Per-seed rows in `(tau, m, sigma, trial)` order.
    pub rows: Vec<SweepRow>,
    /// One mean row per `(tau, m, sigma)` grid point, same order.
    pub aggregates: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_sweep_csv(out, self.rows.iter().chain(&self.aggregates))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Per `(tau, m)`, the aggregate row with the smallest mean `err_l2`.
    pub fn best_per_m(&self) -> Vec<&SweepRow> {
        let mut best: Vec<&SweepRow> = Vec::new();
        for row in &self.aggregates {
            let Some(err) = row.err_l2 else { continue };
            match best.iter_mut().find(|b| b.m == row.m && b.tau == row.tau) {
                Some(b) => {
                    if err < b.err_l2.unwrap_or(f64::INFINITY) {
                        *b = row;
                    }
                }
                None => best.push(row),
            }
        }
        best
    }
}

pub fn write_sweep_csv<'a, W: Write>(mut out: W, rows: impl IntoIterator<Item = &'a SweepRow>) -> Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Checks the header and that every line has exactly the header's column
/// count. Returns the number of data lines.
pub fn validate_csv_schema(text: &str) -> Result<usize> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "empty sweep CSV"))?;
    if header != CSV_HEADER.join(",") {
        return Err(Error::parse(1, format!("unexpected header {header:?}")));
    }
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        let cols = line.split(',').count();
        if cols != CSV_HEADER.len() {
            return Err(Error::parse(
                i + 2,
                format!("expected {} columns, found {cols}", CSV_HEADER.len()),
            ));
        }
        count += 1;
    }
    Ok(count)
}

/// `sqrt(mean((pred - truth)^2))`
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len("prediction length", truth.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::invalid("rmse of empty vectors"));
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

struct Original {
    result: SolverResult,
    residual: Vec<f64>,
    eta: f64,
    wall_ms: f64,
}

/// Loads the configured data and runs [`run_sweep_on`].
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let (x, y) = cfg.data.load()?;
    run_sweep_on(cfg, &x, &y)
}

/// Runs the sweep on given data. Cell failures become `status` values; only
/// configuration and original-solve errors abort.
pub fn run_sweep_on(cfg: &ExperimentConfig, x: &DesignMatrix, y: &[f64]) -> Result<SweepResult> {
    cfg.validate()?;
    check_len("target length", x.n(), y.len())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let originals: Vec<Original> = pool.install(|| {
        cfg.tau_grid
            .par_iter()
            .map(|&tau| solve_reference(cfg, x, y, tau))
            .collect::<Result<Vec<_>>>()
    })?;

    let cells: Vec<(usize, usize, usize)> = (0..cfg.tau_grid.len())
        .flat_map(|t| (0..cfg.m_grid.len()).flat_map(move |mi| (0..cfg.trials).map(move |k| (t, mi, k))))
        .collect();
    let cell_rows: Vec<Vec<SweepRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(t, mi, k)| run_cell(cfg, x, y, &originals[t], cfg.tau_grid[t], cfg.m_grid[mi], k))
            .collect()
    });

    // cell_rows[(t, mi, k)][sigma]  ->  rows in (t, mi, sigma, k) order.
    let ns = cfg.sigma_grid.len();
    let mut rows = Vec::with_capacity(cells.len() * ns);
    let mut aggregates = Vec::new();
    for group in cell_rows.chunks(cfg.trials) {
        for si in 0..ns {
            let members: Vec<&SweepRow> = group.iter().map(|c| &c[si]).collect();
            rows.extend(members.iter().map(|r| (*r).clone()));
            aggregates.push(aggregate(&members));
        }
    }
    Ok(SweepResult { rows, aggregates })
}

fn solve_reference(cfg: &ExperimentConfig, x: &DesignMatrix, y: &[f64], tau: f64) -> Result<Original> {
    let spec = ProblemSpec {
        tau,
        sigma: 0.0,
        ..cfg.spec
    };
    let start = Instant::now();
    let result = solve_original(x, y, &spec, &cfg.solve, None)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut residual = x.matvec(&result.w)?;
    residual.iter_mut().zip(y).for_each(|(a, b)| *a -= b);
    Ok(Original {
        eta: norm2(&residual),
        result,
        residual,
        wall_ms,
    })
}

fn run_cell(
    cfg: &ExperimentConfig,
    x: &DesignMatrix,
    y: &[f64],
    orig: &Original,
    tau: f64,
    m: usize,
    trial: usize,
) -> Vec<SweepRow> {
    let seed = derive_seed(cfg.base_seed, trial as u64);
    let base = SweepRow {
        seed: Some(seed),
        family: cfg.family,
        m,
        lambda: cfg.spec.lambda,
        tau,
        sigma: None,
        err_l1: None,
        err_l2: None,
        obj_hat: None,
        obj_orig: Some(orig.result.objective),
        eta: Some(orig.eta),
        q_inf: None,
        epochs_hat: None,
        epochs_orig: Some(orig.result.epochs as f64),
        wall_ms_hat: None,
        wall_ms_orig: cfg.timing.then_some(orig.wall_ms),
        status: String::new(),
        err_l2_se: None,
    };
    let sigmas: Vec<f64> = match cfg.sigma_unit {
        SigmaUnit::Absolute => cfg.sigma_grid.clone(),
        SigmaUnit::Theory => {
            let unit = sigma_theoretical(orig.eta, x.col_norm_bound(), x.n(), x.d(), m, cfg.spec.delta, 1.0);
            cfg.sigma_grid.iter().map(|g| g * unit).collect()
        }
    };
    let fail = |msg: String| -> Vec<SweepRow> {
        sigmas
            .iter()
            .map(|&s| SweepRow {
                sigma: Some(s),
                status: format!("error: {}", msg.replace([',', '\n'], ";")),
                ..base.clone()
            })
            .collect()
    };

    let params = SketchParams::new(cfg.family, m, seed);
    let op = match params.build(x.n()) {
        Ok(op) => op,
        Err(e) => return fail(e.to_string()),
    };
    let data = match op.compress(x, y) {
        Ok(d) => d,
        Err(e) => return fail(e.to_string()),
    };
    let q_inf = match compute_q_compressed(x, &data.x_hat, &op, &orig.residual, x.n()) {
        Ok((_, q)) => q,
        Err(e) => return fail(e.to_string()),
    };

    let mut order: Vec<usize> = (0..sigmas.len()).collect();
    order.sort_by(|&a, &b| sigmas[b].total_cmp(&sigmas[a]).then(a.cmp(&b)));
    let mut out: Vec<Option<SweepRow>> = vec![None; sigmas.len()];
    let mut warm: Option<Vec<f64>> = None;
    for si in order {
        let spec = ProblemSpec {
            tau,
            sigma: sigmas[si],
            ..cfg.spec
        };
        let start = Instant::now();
        let solved = solve_compressed(&data, x.n(), &spec, &cfg.solve, warm.as_deref());
        let wall = start.elapsed().as_secs_f64() * 1e3;
        let row = match solved.and_then(|r| error_report(&orig.result.w, &r.w, None).map(|e| (r, e))) {
            Ok((r, err)) => {
                let row = SweepRow {
                    sigma: Some(sigmas[si]),
                    err_l1: Some(err.err_l1),
                    err_l2: Some(err.err_l2),
                    obj_hat: Some(r.objective),
                    q_inf: Some(q_inf),
                    epochs_hat: Some(r.epochs as f64),
                    wall_ms_hat: cfg.timing.then_some(wall),
                    status: if r.converged { "ok" } else { "not_converged" }.into(),
                    ..base.clone()
                };
                warm = Some(r.w);
                row
            }
            Err(e) => SweepRow {
                sigma: Some(sigmas[si]),
                q_inf: Some(q_inf),
                status: format!("error: {}", e.to_string().replace([',', '\n'], ";")),
                ..base.clone()
            },
        };
        out[si] = Some(row);
    }
    out.into_iter().map(|r| r.expect("every sigma visited")).collect()
}

fn mean(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = vals.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn aggregate(rows: &[&SweepRow]) -> SweepRow {
    let first = rows[0];
    let ok: Vec<&&SweepRow> = rows.iter().filter(|r| r.err_l2.is_some()).collect();
    let errs: Vec<f64> = ok.iter().filter_map(|r| r.err_l2).collect();
    let err_mean = mean(errs.iter().map(|v| Some(*v)));
    let se = err_mean.map(|mu| {
        if errs.len() < 2 {
            0.0
        } else {
            let var = errs.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / (errs.len() - 1) as f64;
            (var / errs.len() as f64).sqrt()
        }
    });
    let n_ok = rows.iter().filter(|r| r.status == "ok").count();
    let m = |f: fn(&SweepRow) -> Option<f64>| mean(rows.iter().map(|r| f(r)));
    SweepRow {
        seed: None,
        family: first.family,
        m: first.m,
        lambda: first.lambda,
        tau: first.tau,
        sigma: m(|r| r.sigma),
        err_l1: m(|r| r.err_l1),
        err_l2: err_mean,
        obj_hat: m(|r| r.obj_hat),
        obj_orig: m(|r| r.obj_orig),
        eta: m(|r| r.eta),
        q_inf: m(|r| r.q_inf),
        epochs_hat: m(|r| r.epochs_hat),
        epochs_orig: m(|r| r.epochs_orig),
        wall_ms_hat: m(|r| r.wall_ms_hat),
        wall_ms_orig: m(|r| r.wall_ms_orig),
        status: if n_ok == rows.len() {
            "ok".into()
        } else {
            format!("ok={n_ok}/{}", rows.len())
        },
        err_l2_se: se,
    }
}
