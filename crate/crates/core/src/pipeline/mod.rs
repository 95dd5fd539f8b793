//! Compress-then-solve: `w^ = argmin (1/2n)||A X w - A y||^2 + (lambda/2)||w||^2
//! + (tau + sigma)||w||_1`, and the Dantzig selector on the same data.

mod diagnostics;

pub use diagnostics::{
    compute_q, compute_q_compressed, diagnose, error_report, restricted_eig, rho_estimate, sigma_theoretical,
    DiagnoseOptions, DiagnosticsReport, ErrorReport, RE_SUPPORT_LIMIT,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dantzig::{check_constraint, solve_dantzig, DantzigParams, DantzigProblem};
use crate::error::{Error, Result};
use crate::matrix::{check_len, norm2, DesignMatrix};
use crate::prox::{solve_apcg_from, CompositeProblem, SolverParams, SolverResult};
use crate::sketch::{CompressedData, SketchFamily, SketchOperator, DEFAULT_DENSE_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    ElasticNet,
    Lasso,
    Dantzig,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::ElasticNet => "elastic_net",
            Formulation::Lasso => "lasso",
            Formulation::Dantzig => "dantzig",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "elastic_net" | "elasticnet" | "enet" => Ok(Formulation::ElasticNet),
            "lasso" => Ok(Formulation::Lasso),
            "dantzig" => Ok(Formulation::Dantzig),
            other => Err(Error::invalid(format!("unknown formulation {other:?}"))),
        }
    }
}

/// Regularization `(lambda, tau, sigma)` and the failure probability used by
/// the theory helpers. `sigma` only enters compressed problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub lambda: f64,
    pub tau: f64,
    pub sigma: f64,
    pub delta: f64,
    pub formulation: Formulation,
}

impl ProblemSpec {
    pub fn new(formulation: Formulation, lambda: f64, tau: f64, sigma: f64, delta: f64) -> Result<Self> {
        let spec = Self {
            lambda,
            tau,
            sigma,
            delta,
            formulation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda={} must be finite and >= 0",
                self.lambda
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau={} must be positive", self.tau)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma={} must be finite and >= 0", self.sigma)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::invalid(format!("delta={} must lie in (0, 1/2)", self.delta)));
        }
        if self.formulation == Formulation::Lasso && self.lambda != 0.0 {
            return Err(Error::invalid(
                "lasso takes lambda = 0; the solver adds its own ridge term",
            ));
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    /// `lambda` handed to the solver: `lasso_lambda_eps` for the lasso.
    pub fn solver_lambda(&self, opts: &SolveOptions) -> f64 {
        match self.formulation {
            Formulation::Lasso => opts.lasso_lambda_eps,
            _ => self.lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SketchParams {
    pub family: SketchFamily,
    pub m: usize,
    pub seed: u64,
    pub dense_budget: u64,
}

impl SketchParams {
    pub fn new(family: SketchFamily, m: usize, seed: u64) -> Self {
        Self {
            family,
            m,
            seed,
            dense_budget: DEFAULT_DENSE_BUDGET,
        }
    }

    pub fn build(&self, n: usize) -> Result<SketchOperator> {
        SketchOperator::build_with_budget(self.family, self.m, n, self.seed, self.dense_budget)
    }
}

/// Solver settings shared by the original and compressed solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub solver: SolverParams,
    /// Ridge weight APCG uses for the lasso.
    pub lasso_lambda_eps: f64,
    pub dantzig: DantzigParams,
}

/// Default ridge weight added to the lasso so APCG is strongly convex.
pub const DEFAULT_LASSO_LAMBDA_EPS: f64 = 1e-8;

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            solver: SolverParams::default(),
            lasso_lambda_eps: DEFAULT_LASSO_LAMBDA_EPS,
            dantzig: DantzigParams::default(),
        }
    }
}

/// Solves `min (1/2n)||C w - b||^2 + (lambda/2)||w||^2 + l1 ||w||_1` or the
/// Dantzig selector with bound `l1`.
fn solve_with(
    c: &DesignMatrix,
    b: &[f64],
    n_scale: usize,
    spec: &ProblemSpec,
    l1: f64,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<SolverResult> {
    match spec.formulation {
        Formulation::Dantzig => {
            let p = DantzigProblem::new(c, b, n_scale, l1)?;
            solve_dantzig(&p, &opts.dantzig)
        }
        _ => {
            let p = CompositeProblem::new(c, b, n_scale, spec.solver_lambda(opts), l1)?;
            solve_apcg_from(&p, &opts.solver, warm)
        }
    }
}

/// The original problem, `l1 = tau` (sigma is ignored).
pub fn solve_original(
    x: &DesignMatrix,
    y: &[f64],
    spec: &ProblemSpec,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<SolverResult> {
    spec.validate()?;
    check_len("target length", x.n(), y.len())?;
    solve_with(x, y, x.n(), spec, spec.tau, opts, warm)
}

/// The compressed problem on `(A X, A y)` with `l1 = tau + sigma` and the
/// original `n_scale`.
pub fn solve_compressed(
    data: &CompressedData,
    n_scale: usize,
    spec: &ProblemSpec,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<SolverResult> {
    spec.validate()?;
    solve_with(
        &data.x_hat,
        &data.y_hat,
        n_scale,
        spec,
        spec.tau + spec.sigma,
        opts,
        warm,
    )
}

pub fn compress(x: &DesignMatrix, y: &[f64], sketch: &SketchParams) -> Result<CompressedData> {
    check_len("target length", x.n(), y.len())?;
    sketch.build(x.n())?.compress(x, y)
}

pub fn compress_and_solve(
    x: &DesignMatrix,
    y: &[f64],
    spec: &ProblemSpec,
    sketch: &SketchParams,
    opts: &SolveOptions,
) -> Result<(SolverResult, CompressedData)> {
    spec.validate()?;
    let data = compress(x, y, sketch)?;
    let res = solve_compressed(&data, x.n(), spec, opts, None)?;
    Ok((res, data))
}

/// Whether `w` lies in the sketched constraint domain
/// `(1/n)||X^^T (X^ w - y^)||_inf <= bound`. Returns `(value, feasible)`.
pub fn check_feasibility(data: &CompressedData, n_scale: usize, w: &[f64], bound: f64) -> Result<(f64, bool)> {
    let p = DantzigProblem::new(&data.x_hat, &data.y_hat, n_scale, bound)?;
    check_constraint(&p, w)
}

/// Data-driven `sigma`: the theory formula with `eta` replaced by the
/// residual norm of a coarse `sigma = 0` solve on the compressed data.
pub fn sigma_auto(
    data: &CompressedData,
    x_col_norm_bound: f64,
    n: usize,
    spec: &ProblemSpec,
    opts: &SolveOptions,
    multiplier: f64,
) -> Result<f64> {
    let mut coarse = *opts;
    coarse.solver.tol = coarse.solver.tol.max(1e-4);
    coarse.dantzig.tol = coarse.dantzig.tol.max(1e-3);
    let res = solve_compressed(data, n, &spec.with_sigma(0.0), &coarse, None)?;
    let mut r = data.x_hat.matvec(&res.w)?;
    r.iter_mut().zip(&data.y_hat).for_each(|(a, b)| *a -= b);
    Ok(sigma_theoretical(
        norm2(&r),
        x_col_norm_bound,
        n,
        data.x_hat.d(),
        data.m,
        spec.delta,
        multiplier,
    ))
}
