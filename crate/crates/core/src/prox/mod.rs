//! Composite objective `f(w) + tau' ||w||_1` with
//! `f(w) = (1/2n) ||C w - b||^2 + (lambda/2) ||w||^2`, and its solvers.
//!
//! `C` is either the original data (N = n rows) or the sketched data
//! (N = m rows). The divisor `n` is always the original instance count.

mod apcg;
mod ista;

pub use apcg::{solve_apcg, solve_apcg_from};
pub use ista::{solve_ista, solve_ista_from};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{check_len, dot, norm1, norm_inf, DesignMatrix};

/// `sign(v) * max(|v| - t, 0)`
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompositeProblem<'a> {
    c: &'a DesignMatrix,
    b: &'a [f64],
    n_scale: f64,
    lambda: f64,
    tau_prime: f64,
}

impl<'a> CompositeProblem<'a> {
    pub fn new(c: &'a DesignMatrix, b: &'a [f64], n_scale: usize, lambda: f64, tau_prime: f64) -> Result<Self> {
        check_len("target length", c.n(), b.len())?;
        if n_scale == 0 {
            return Err(Error::invalid("n_scale must be at least 1"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda={lambda} must be finite and >= 0")));
        }
        if !(tau_prime >= 0.0 && tau_prime.is_finite()) {
            return Err(Error::invalid(format!("tau'={tau_prime} must be finite and >= 0")));
        }
        Ok(Self {
            c,
            b,
            n_scale: n_scale as f64,
            lambda,
            tau_prime,
        })
    }

    pub fn data(&self) -> &'a DesignMatrix {
        self.c
    }

    pub fn target(&self) -> &'a [f64] {
        self.b
    }

    pub fn n_scale(&self) -> f64 {
        self.n_scale
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau_prime(&self) -> f64 {
        self.tau_prime
    }

    pub fn dim(&self) -> usize {
        self.c.d()
    }

    /// `C w - b`
    pub fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.c.matvec(w).expect("dimension checked by caller");
        for (ri, bi) in r.iter_mut().zip(self.b) {
            *ri -= bi;
        }
        r
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.dim(), "coefficient length");
        self.objective_from_residual(&self.residual(w), w)
    }

    pub(crate) fn objective_from_residual(&self, r: &[f64], w: &[f64]) -> f64 {
        0.5 * dot(r, r) / self.n_scale + 0.5 * self.lambda * dot(w, w) + self.tau_prime * norm1(w)
    }

    /// `grad f(w) = (1/n) C^T (C w - b) + lambda w`
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.gradient_from_residual(&self.residual(w), w)
    }

    pub(crate) fn gradient_from_residual(&self, r: &[f64], w: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.c.column(j).dot(r) / self.n_scale + self.lambda * w[j])
            .collect()
    }

    /// Optimality residual `min_{g in d||w||_1} ||grad f(w) + tau' g||_inf`.
    pub fn certificate(&self, w: &[f64]) -> f64 {
        certificate_from_gradient(&self.gradient(w), w, self.tau_prime)
    }

    /// Scale used by the stopping test: `||C^T b||_inf / n + 1`.
    pub fn certificate_scale(&self) -> f64 {
        let ctb = self.c.t_matvec(self.b).expect("lengths checked at construction");
        norm_inf(&ctb) / self.n_scale + 1.0
    }

    /// `(R_c^2/n + lambda) / lambda`, absent when `lambda = 0`.
    pub fn kappa(&self) -> Option<f64> {
        (self.lambda > 0.0).then(|| {
            let r = self.c.col_norm_bound();
            (r * r / self.n_scale + self.lambda) / self.lambda
        })
    }

    /// Power-iteration estimate of `sigma_max(C^T C)/n + lambda`, with a 1%
    /// safety margin on the data term.
    pub fn lipschitz_estimate(&self) -> f64 {
        let d = self.dim();
        // Deterministic, non-degenerate start vector.
        let mut v: Vec<f64> = (0..d)
            .map(|j| 1.0 + 0.5 * ((j as f64 * 0.618_033_988_75).fract() - 0.5))
            .collect();
        let mut est = 0.0;
        for _ in 0..200 {
            let nv = dot(&v, &v).sqrt();
            if nv == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let cv = self.c.matvec(&v).expect("length d");
            let next = self.c.t_matvec(&cv).expect("length N");
            let rq = dot(&v, &next);
            v = next;
            if (rq - est).abs() <= 1e-10 * rq.abs() {
                est = rq;
                break;
            }
            est = rq;
        }
        // Never below the largest diagonal entry of C^T C.
        let r = self.c.col_norm_bound();
        1.01 * est.max(r * r) / self.n_scale + self.lambda
    }
}

pub(crate) fn certificate_from_gradient(grad: &[f64], w: &[f64], tau: f64) -> f64 {
    grad.iter()
        .zip(w)
        .map(|(&g, &wj)| {
            if wj > 0.0 {
                (g + tau).abs()
            } else if wj < 0.0 {
                (g - tau).abs()
            } else {
                (g.abs() - tau).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// One cyclic pass of exact coordinate minimization starting at `w` with
/// residual `r = C w - b`. Never increases the objective and leaves exact
/// zeros wherever the coordinate optimum is zero.
pub(crate) fn coordinate_polish(p: &CompositeProblem<'_>, w: &mut [f64], r: &mut [f64]) {
    let c = p.data();
    for j in 0..p.dim() {
        let col = c.column(j);
        let curv = col.norm_sq() / p.n_scale + p.lambda;
        if curv <= 0.0 {
            continue;
        }
        let grad = col.dot(r) / p.n_scale + p.lambda * w[j];
        let new = soft_threshold(w[j] - grad / curv, p.tau_prime / curv);
        let delta = new - w[j];
        if delta != 0.0 {
            w[j] = new;
            col.axpy(delta, r);
        }
    }
}

/// Per-epoch floating-point work proxy, `N * d`.
pub fn epoch_cost_model(p: &CompositeProblem<'_>) -> f64 {
    p.data().n() as f64 * p.dim() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverParams {
    /// Relative objective decrease per epoch below which the subgradient
    /// certificate is checked; converged when that is also `<= 10 tol scale`.
    pub tol: f64,
    pub max_epochs: usize,
    /// Coordinate sampling seed (APCG only).
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_epochs: 20_000,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn new(tol: f64, max_epochs: usize, seed: u64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::invalid(format!("tol={tol} must be positive")));
        }
        Ok(Self { tol, max_epochs, seed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub w: Vec<f64>,
    pub objective: f64,
    pub epochs: usize,
    pub converged: bool,
    pub kappa: Option<f64>,
    pub support_size: usize,
    /// Subgradient optimality residual at `w`.
    pub certificate: f64,
}

impl SolverResult {
    pub(crate) fn new(p: &CompositeProblem<'_>, w: Vec<f64>, epochs: usize, converged: bool) -> Self {
        let r = p.residual(&w);
        let grad = p.gradient_from_residual(&r, &w);
        Self {
            objective: p.objective_from_residual(&r, &w),
            certificate: certificate_from_gradient(&grad, &w, p.tau_prime()),
            support_size: support_size(&w),
            kappa: p.kappa(),
            w,
            epochs,
            converged,
        }
    }
}

impl SolverResult {
    /// Result for a non-composite solve (e.g. the Dantzig selector).
    pub fn from_parts(w: Vec<f64>, objective: f64, epochs: usize, converged: bool, certificate: f64) -> Self {
        Self {
            support_size: support_size(&w),
            w,
            objective,
            epochs,
            converged,
            kappa: None,
            certificate,
        }
    }
}

/// Entries with `|w_j| > 1e-8 ||w||_inf`.
pub fn support_size(w: &[f64]) -> usize {
    let tol = 1e-8 * norm_inf(w);
    w.iter().filter(|x| x.abs() > tol).count()
}

pub(crate) fn check_start(p: &CompositeProblem<'_>, w0: Option<&[f64]>) -> Result<Vec<f64>> {
    match w0 {
        Some(w) => {
            check_len("warm start length", p.dim(), w.len())?;
            Ok(w.to_vec())
        }
        None => Ok(vec![0.0; p.dim()]),
    }
}
