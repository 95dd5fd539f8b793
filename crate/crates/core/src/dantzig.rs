//! Dantzig selector `min ||w||_1  s.t.  (1/n) ||M^T (M w - y)||_inf <= bound`
//! on original data (`bound = tau`) or sketched data (`bound = tau + sigma`).
//!
//! With `G = M^T M / n` and `c = M^T y / n` the problem is an LP. The default
//! solver is a primal-dual interior point method started from a solution of
//! `G w = c`, which is strictly feasible because `c` lies in the range of `G`.
//! ADMM on the splitting `w = v`, `G w - c = z` is kept as an alternative.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{check_len, dot, norm1, norm2, norm_inf, DesignMatrix};
use crate::prox::{soft_threshold, SolverResult};

#[derive(Debug, Clone, Copy)]
pub struct DantzigProblem<'a> {
    m: &'a DesignMatrix,
    y: &'a [f64],
    n_scale: f64,
    bound: f64,
}

impl<'a> DantzigProblem<'a> {
    pub fn new(m: &'a DesignMatrix, y: &'a [f64], n_scale: usize, bound: f64) -> Result<Self> {
        check_len("target length", m.n(), y.len())?;
        if n_scale == 0 {
            return Err(Error::invalid("n_scale must be at least 1"));
        }
        if !(bound > 0.0) || bound.is_nan() {
            return Err(Error::invalid(format!("bound={bound} must be positive")));
        }
        Ok(Self {
            m,
            y,
            n_scale: n_scale as f64,
            bound,
        })
    }

    pub fn data(&self) -> &'a DesignMatrix {
        self.m
    }

    pub fn target(&self) -> &'a [f64] {
        self.y
    }

    pub fn n_scale(&self) -> f64 {
        self.n_scale
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `G v = M^T M v / n`
    fn gram(&self, v: &[f64]) -> Vec<f64> {
        let mv = self.m.matvec(v).expect("length d");
        let mut g = self.m.t_matvec(&mv).expect("length N");
        g.iter_mut().for_each(|x| *x /= self.n_scale);
        g
    }

    /// `c = M^T y / n`
    fn rhs(&self) -> Vec<f64> {
        let mut c = self.m.t_matvec(self.y).expect("length N");
        c.iter_mut().for_each(|x| *x /= self.n_scale);
        c
    }

    fn value_of(&self, w: &[f64], c: &[f64]) -> f64 {
        self.gram(w)
            .iter()
            .zip(c)
            .map(|(g, ci)| (g - ci).abs())
            .fold(0.0, f64::max)
    }
}

/// `((1/n) ||M^T (M w - y)||_inf, value <= bound)`
pub fn check_constraint(p: &DantzigProblem<'_>, w: &[f64]) -> Result<(f64, bool)> {
    check_len("coefficient length", p.m.d(), w.len())?;
    let r: Vec<f64> = p.m.matvec(w)?.iter().zip(p.y).map(|(a, b)| a - b).collect();
    let value = norm_inf(&p.m.t_matvec(&r)?) / p.n_scale;
    Ok((value, value <= p.bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DantzigMethod {
    Admm,
    /// Primal-dual interior point on the LP form, started from a
    /// least-squares point. Falls back to ADMM if that start is not interior.
    InteriorPoint,
}

impl DantzigMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DantzigMethod::Admm => "admm",
            DantzigMethod::InteriorPoint => "interior_point",
        }
    }
}

impl std::fmt::Display for DantzigMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DantzigMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "admm" => Ok(DantzigMethod::Admm),
            "interior_point" | "ipm" => Ok(DantzigMethod::InteriorPoint),
            other => Err(Error::invalid(format!("unknown Dantzig method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DantzigParams {
    /// Relative tolerance: duality gap for the interior point method,
    /// primal/dual residuals for ADMM. The returned point satisfies the
    /// constraint to `bound (1 + tol)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub method: DantzigMethod,
}

impl Default for DantzigParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 20_000,
            rho: 1.0,
            method: DantzigMethod::Admm,
        }
    }
}

impl DantzigParams {
    pub fn new(tol: f64, max_iters: usize) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::invalid(format!("tol={tol} must be positive")));
        }
        Ok(Self {
            tol,
            max_iters,
            ..Self::default()
        })
    }
}

const RHO_PERIOD: usize = 20;
const RHO_MAX_ADAPTATIONS: usize = 40;

/// `objective` is `||w||_1`, `certificate` the final constraint value,
/// `epochs` the iteration count of the method used.
///
/// The returned point is always feasible up to `bound (1 + tol)`.
pub fn solve_dantzig(p: &DantzigProblem<'_>, params: &DantzigParams) -> Result<SolverResult> {
    if !(params.tol > 0.0 && params.tol.is_finite()) {
        return Err(Error::invalid(format!("tol={} must be positive", params.tol)));
    }
    let d = p.m.d();
    let c = p.rhs();
    if norm_inf(&c) <= p.bound {
        let w = vec![0.0; d];
        return Ok(SolverResult::from_parts(w, 0.0, 0, true, norm_inf(&c)));
    }
    if params.method == DantzigMethod::InteriorPoint {
        let mut w_ls = vec![0.0; d];
        conjugate_gradient(|x| p.gram(x), &c, &mut w_ls, 1e-14, 20 * d + 100);
        let mode = newton_solve_for(p.m.n(), d);
        if let Some((w, iters, converged)) = interior_point(p, &c, w_ls, params, mode) {
            let value = p.value_of(&w, &c);
            let l1 = norm1(&w);
            return Ok(SolverResult::from_parts(w, l1, iters, converged, value));
        }
    }
    admm(p, &c, params)
}

/// Largest `d` for which the interior point method forms `G` and factors the
/// `d x d` Newton system.
const DENSE_NEWTON_LIMIT: usize = 400;

/// Above `DENSE_NEWTON_LIMIT`, the Newton system is reduced to `rows x rows`
/// by the Woodbury identity when there are at most this many rows and the
/// dense copy of `M` fits in `LOW_RANK_ENTRY_LIMIT` entries.
const LOW_RANK_ROW_LIMIT: usize = 1500;
const LOW_RANK_ENTRY_LIMIT: usize = 30_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NewtonSolve {
    Dense,
    LowRank,
    /// Preconditioned CG; inexact, so progress can stall short of `tol`.
    Iterative,
}

fn newton_solve_for(rows: usize, d: usize) -> NewtonSolve {
    if d <= DENSE_NEWTON_LIMIT {
        NewtonSolve::Dense
    } else if rows <= LOW_RANK_ROW_LIMIT && rows.saturating_mul(d) <= LOW_RANK_ENTRY_LIMIT {
        NewtonSolve::LowRank
    } else {
        NewtonSolve::Iterative
    }
}

/// Barrier growth factor.
const IPM_MU: f64 = 10.0;

/// LP in `(x, u)`: minimize `sum u` subject to `x - u <= 0`, `-x - u <= 0`,
/// `G x - c - b <= 0`, `-G x + c - b <= 0`. Returns `None` when `x0` is not
/// strictly feasible.
fn interior_point(
    p: &DantzigProblem<'_>,
    c: &[f64],
    x0: Vec<f64>,
    params: &DantzigParams,
    mode: NewtonSolve,
) -> Option<(Vec<f64>, usize, bool)> {
    let d = x0.len();
    let b = p.bound;
    let tol = params.tol;
    let m_dense =
        (mode != NewtonSolve::Iterative).then(|| DMatrix::from_column_slice(p.m.n(), d, &p.m.to_dense_data()));
    let dense = match (&m_dense, mode) {
        (Some(m), NewtonSolve::Dense) => Some(m.transpose() * m / p.n_scale),
        _ => None,
    };
    let gram = |v: &[f64]| -> Vec<f64> {
        match &dense {
            Some(g) => (g * DVector::from_column_slice(v)).as_slice().to_vec(),
            None => p.gram(v),
        }
    };
    let g_diag: Vec<f64> = match &dense {
        Some(g) => g.diagonal().as_slice().to_vec(),
        None => p.m.col_norms_sq().iter().map(|v| v / p.n_scale).collect(),
    };

    let mut x = x0;
    let x_max = norm_inf(&x);
    let mut u: Vec<f64> = x.iter().map(|v| 0.95 * v.abs() + 0.1 * x_max).collect();
    let mut gx = gram(&x);
    let constraints = |x: &[f64], u: &[f64], gx: &[f64]| -> [Vec<f64>; 4] {
        [
            (0..d).map(|j| x[j] - u[j]).collect(),
            (0..d).map(|j| -x[j] - u[j]).collect(),
            (0..d).map(|j| gx[j] - c[j] - b).collect(),
            (0..d).map(|j| -gx[j] + c[j] - b).collect(),
        ]
    };
    let mut f = constraints(&x, &u, &gx);
    if f.iter().flatten().any(|v| !(*v < 0.0)) {
        return None;
    }
    let mut lam: [Vec<f64>; 4] = f.clone().map(|fk| fk.iter().map(|v| -1.0 / v).collect());
    let n_con = 4.0 * d as f64;

    let residual = |lam: &[Vec<f64>; 4], f: &[Vec<f64>; 4], t: f64| -> f64 {
        let l34: Vec<f64> = (0..d).map(|j| lam[2][j] - lam[3][j]).collect();
        let g34 = gram(&l34);
        let mut acc = 0.0;
        for j in 0..d {
            acc += (lam[0][j] - lam[1][j] + g34[j]).powi(2) + (1.0 - lam[0][j] - lam[1][j]).powi(2);
        }
        for k in 0..4 {
            for j in 0..d {
                acc += (-lam[k][j] * f[k][j] - 1.0 / t).powi(2);
            }
        }
        acc.sqrt()
    };

    let mut iters = 0;
    let mut converged = false;
    while iters < params.max_iters {
        let gap: f64 = -(0..4).map(|k| dot(&f[k], &lam[k])).sum::<f64>();
        let dual_res = {
            let l34: Vec<f64> = (0..d).map(|j| lam[2][j] - lam[3][j]).collect();
            let g34 = gram(&l34);
            (0..d)
                .map(|j| (lam[0][j] - lam[1][j] + g34[j]).powi(2) + (1.0 - lam[0][j] - lam[1][j]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        if gap <= tol * u.iter().sum::<f64>() && dual_res <= tol * (d as f64).sqrt() {
            converged = true;
            break;
        }
        iters += 1;
        let t = IPM_MU * n_con / gap;

        let sk: [Vec<f64>; 4] = std::array::from_fn(|k| (0..d).map(|j| -lam[k][j] / f[k][j]).collect());
        let inv_f: [Vec<f64>; 4] = std::array::from_fn(|k| f[k].iter().map(|v| 1.0 / v).collect());
        let s34: Vec<f64> = (0..d).map(|j| sk[2][j] + sk[3][j]).collect();
        let s12: Vec<f64> = (0..d).map(|j| sk[0][j] + sk[1][j]).collect();
        let diag: Vec<f64> = (0..d).map(|j| 4.0 * sk[0][j] * sk[1][j] / s12[j]).collect();
        let f34: Vec<f64> = (0..d).map(|j| inv_f[2][j] - inv_f[3][j]).collect();
        let gf34 = gram(&f34);
        let rhs_u: Vec<f64> = (0..d).map(|j| -1.0 - (inv_f[0][j] + inv_f[1][j]) / t).collect();
        let rhs: Vec<f64> = (0..d)
            .map(|j| {
                let rx = (inv_f[0][j] - inv_f[1][j] + gf34[j]) / t;
                rx - (sk[1][j] - sk[0][j]) / s12[j] * rhs_u[j]
            })
            .collect();

        // (diag + G S34 G) dx = rhs
        let dx = match &dense {
            Some(g) => {
                let mut a = g * DMatrix::from_diagonal(&DVector::from_column_slice(&s34)) * g;
                for j in 0..d {
                    a[(j, j)] += diag[j];
                }
                let rhs_v = DVector::from_column_slice(&rhs);
                match a.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs_v).as_slice().to_vec(),
                    None => match a.lu().solve(&rhs_v) {
                        Some(v) => v.as_slice().to_vec(),
                        None => break,
                    },
                }
            }
            None => {
                let op = |v: &[f64]| -> Vec<f64> {
                    let gv = gram(v);
                    let sgv: Vec<f64> = (0..d).map(|j| s34[j] * gv[j]).collect();
                    let gsgv = gram(&sgv);
                    (0..d).map(|j| diag[j] * v[j] + gsgv[j]).collect()
                };
                let mut dx = vec![0.0; d];
                if mode == NewtonSolve::LowRank {
                    let m = m_dense.as_ref().expect("dense copy for the low-rank solve");
                    let Some(inv) = LowRankInverse::new(m, p.n_scale, &s34, &diag) else {
                        break;
                    };
                    preconditioned_cg(op, |r| inv.apply(r), &rhs, &mut dx, 1e-12, 1000);
                } else {
                    let jacobi: Vec<f64> = (0..d).map(|j| diag[j] + s34[j] * g_diag[j] * g_diag[j]).collect();
                    let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(&jacobi).map(|(a, b)| a / b).collect() };
                    preconditioned_cg(op, precond, &rhs, &mut dx, 1e-10, 10 * d + 100);
                }
                dx
            }
        };
        let du: Vec<f64> = (0..d)
            .map(|j| (rhs_u[j] - (sk[1][j] - sk[0][j]) * dx[j]) / s12[j])
            .collect();
        let gdx = gram(&dx);
        let df: [Vec<f64>; 4] = [
            (0..d).map(|j| dx[j] - du[j]).collect(),
            (0..d).map(|j| -dx[j] - du[j]).collect(),
            gdx.clone(),
            gdx.iter().map(|v| -v).collect(),
        ];
        let dlam: [Vec<f64>; 4] = std::array::from_fn(|k| {
            (0..d)
                .map(|j| -lam[k][j] - inv_f[k][j] / t + sk[k][j] * df[k][j])
                .collect()
        });

        let mut step: f64 = 1.0;
        for k in 0..4 {
            for j in 0..d {
                if dlam[k][j] < 0.0 {
                    step = step.min(-lam[k][j] / dlam[k][j]);
                }
            }
        }
        step *= 0.99;
        let r_old = residual(&lam, &f, t);
        let mut accepted = false;
        for _ in 0..60 {
            let f_new: [Vec<f64>; 4] = std::array::from_fn(|k| (0..d).map(|j| f[k][j] + step * df[k][j]).collect());
            if f_new.iter().flatten().all(|v| *v < 0.0) {
                let lam_new: [Vec<f64>; 4] =
                    std::array::from_fn(|k| (0..d).map(|j| lam[k][j] + step * dlam[k][j]).collect());
                if residual(&lam_new, &f_new, t) <= (1.0 - 0.01 * step) * r_old {
                    for j in 0..d {
                        x[j] += step * dx[j];
                        u[j] += step * du[j];
                        gx[j] += step * gdx[j];
                    }
                    lam = lam_new;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || step < 1e-10 {
            break;
        }
        // Recompute from x, u so rounding in the linear updates cannot
        // accumulate.
        gx = gram(&x);
        f = constraints(&x, &u, &gx);
        if f.iter().flatten().any(|v| !(*v < 0.0)) {
            break;
        }
    }

    // Interior iterates carry tiny entries off the support; zero them when
    // the constraint still holds.
    let cut = tol * norm_inf(&x);
    let mut sparse = x.clone();
    sparse.iter_mut().filter(|v| v.abs() <= cut).for_each(|v| *v = 0.0);
    if p.value_of(&sparse, c) <= b {
        x = sparse;
    }
    if p.value_of(&x, c) > b * (1.0 + tol) {
        return None;
    }
    Some((x, iters, converged))
}

/// Woodbury inverse of `diag(D) + G diag(s) G` with `G = M^T M / n`, through
/// `G S G = U U^T`, `U = M^T L`, `L L^T = M S M^T / n^2`. Loses accuracy when
/// `D` spans many orders of magnitude, so it serves as a CG preconditioner.
struct LowRankInverse {
    u: DMatrix<f64>,
    du: DMatrix<f64>,
    dinv: Vec<f64>,
    cap: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl LowRankInverse {
    fn new(m: &DMatrix<f64>, n_scale: f64, s: &[f64], diag: &[f64]) -> Option<Self> {
        let rows = m.nrows();
        let mut ms = m.clone();
        for (j, mut col) in ms.column_iter_mut().enumerate() {
            col *= s[j].sqrt() / n_scale;
        }
        let k = &ms * ms.transpose();
        let l = match k.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                // Dependent rows of M: a relative jitter keeps K factorable.
                let jitter = 1e-13 * k.trace().max(f64::MIN_POSITIVE) / rows as f64;
                (k + DMatrix::identity(rows, rows) * jitter).cholesky()?.l()
            }
        };
        let u = m.transpose() * l;
        let dinv: Vec<f64> = diag.iter().map(|v| 1.0 / v).collect();
        let mut du = u.clone();
        for (i, mut row) in du.row_iter_mut().enumerate() {
            row *= dinv[i];
        }
        let mut cap = u.transpose() * &du;
        for i in 0..rows {
            cap[(i, i)] += 1.0;
        }
        Some(Self {
            cap: cap.cholesky()?,
            u,
            du,
            dinv,
        })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let d = r.len();
        let dr = DVector::from_iterator(d, (0..d).map(|j| self.dinv[j] * r[j]));
        let t = self.cap.solve(&(self.u.transpose() * &dr));
        let corr = &self.du * t;
        (0..d).map(|j| dr[j] - corr[j]).collect()
    }
}

/// ADMM on the splitting `w = v`, `G w - c = z`. When the final iterate
/// violates the constraint it is blended toward a least-squares solution of
/// `G w = c`.
fn admm(p: &DantzigProblem<'_>, c: &[f64], params: &DantzigParams) -> Result<SolverResult> {
    let d = p.m.d();
    let c = c.to_vec();
    let bound = p.bound;
    let tol = params.tol;
    let c_norm = norm2(&c);
    let mut rho = params.rho;
    let mut w = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut z: Vec<f64> = c.iter().map(|&ci| (-ci).clamp(-bound, bound)).collect();
    let mut u1 = vec![0.0; d];
    let mut u2 = vec![0.0; d];
    let mut iters = 0;
    let mut converged = false;
    let mut adaptations = 0;

    while iters < params.max_iters {
        iters += 1;
        // (I + G^2) w = (v - u1) + G (c + z - u2)
        let t: Vec<f64> = (0..d).map(|j| c[j] + z[j] - u2[j]).collect();
        let gt = p.gram(&t);
        let rhs: Vec<f64> = (0..d).map(|j| v[j] - u1[j] + gt[j]).collect();
        let cg_tol = 1e-3 * tol;
        conjugate_gradient(
            |x| {
                let gx = p.gram(x);
                let ggx = p.gram(&gx);
                x.iter().zip(ggx).map(|(a, b)| a + b).collect()
            },
            &rhs,
            &mut w,
            cg_tol,
            10 * d + 50,
        );
        let gw = p.gram(&w);

        let v_old = std::mem::take(&mut v);
        v = (0..d).map(|j| soft_threshold(w[j] + u1[j], 1.0 / rho)).collect();
        let z_old = std::mem::take(&mut z);
        z = (0..d).map(|j| (gw[j] - c[j] + u2[j]).clamp(-bound, bound)).collect();

        let mut r1 = 0.0;
        let mut r2 = 0.0;
        for j in 0..d {
            let a = w[j] - v[j];
            let b = gw[j] - c[j] - z[j];
            u1[j] += a;
            u2[j] += b;
            r1 += a * a;
            r2 += b * b;
        }
        let primal = (r1 + r2).sqrt();
        let dz: Vec<f64> = (0..d).map(|j| z[j] - z_old[j]).collect();
        let gdz = p.gram(&dz);
        let dual_vec: Vec<f64> = (0..d).map(|j| rho * (v[j] - v_old[j] + gdz[j])).collect();
        let dual = norm2(&dual_vec);

        let aw = (dot(&w, &w) + dot(&gw, &gw)).sqrt();
        let zeta = (dot(&v, &v) + dot(&z, &z)).sqrt() + c_norm;
        let eps_pri = tol * aw.max(zeta).max(f64::MIN_POSITIVE);
        let gu2 = p.gram(&u2);
        let atu: Vec<f64> = (0..d).map(|j| rho * (u1[j] + gu2[j])).collect();
        let eps_dual = tol * norm2(&atu).max(f64::MIN_POSITIVE);
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }

        // Residual balancing on a sparse schedule and a bounded number of
        // times, so rho is eventually fixed; scaled duals rescale inversely.
        let may_adapt = iters % RHO_PERIOD == 0 && adaptations < RHO_MAX_ADAPTATIONS;
        if may_adapt && primal > 10.0 * dual {
            adaptations += 1;
            rho *= 2.0;
            u1.iter_mut().chain(u2.iter_mut()).for_each(|x| *x /= 2.0);
        } else if may_adapt && dual > 10.0 * primal {
            adaptations += 1;
            rho /= 2.0;
            u1.iter_mut().chain(u2.iter_mut()).for_each(|x| *x *= 2.0);
        }
    }

    let target = bound * (1.0 + 0.5 * tol);
    let value_v = p.value_of(&v, &c);
    let w_final = if value_v <= target {
        v
    } else {
        restore_feasibility(p, &c, v, value_v, target)
    };
    let value = p.value_of(&w_final, &c);
    let converged = converged && value <= bound * (1.0 + tol);
    let l1 = norm1(&w_final);
    Ok(SolverResult::from_parts(w_final, l1, iters, converged, value))
}

/// Blends `w` toward `w_ls` (constraint value near 0) until the value is at
/// most `target`. The constraint value is convex in the blend weight.
fn restore_feasibility(p: &DantzigProblem<'_>, c: &[f64], w: Vec<f64>, value_w: f64, target: f64) -> Vec<f64> {
    let d = w.len();
    let mut w_ls = w.clone();
    conjugate_gradient(|x| p.gram(x), c, &mut w_ls, 1e-14, 20 * d + 100);
    let value_ls = p.value_of(&w_ls, c);
    let blend = |theta: f64| -> Vec<f64> {
        w.iter()
            .zip(&w_ls)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect()
    };
    if value_ls >= target {
        return w_ls;
    }
    let mut theta = ((value_w - target) / (value_w - value_ls)).clamp(0.0, 1.0);
    loop {
        let cand = blend(theta);
        if p.value_of(&cand, c) <= target || theta >= 1.0 {
            return cand;
        }
        theta = (theta + (1.0 - theta) * 1e-3).max(theta * (1.0 + 1e-9)).min(1.0);
    }
}

/// Preconditioned CG, warm-started from `x`.
fn preconditioned_cg<F, P>(op: F, precond: P, b: &[f64], x: &mut [f64], rel_tol: f64, max_iters: usize)
where
    F: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let ax = op(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z = precond(&r);
    let mut pdir = z.clone();
    let mut rz = dot(&r, &z);
    let stop = rel_tol * norm2(b);
    for _ in 0..max_iters {
        if norm2(&r) <= stop {
            break;
        }
        let ap = op(&pdir);
        let pap = dot(&pdir, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(pdir.iter().zip(&ap)) {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in pdir.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
}

/// CG for a symmetric positive semidefinite operator, warm-started from `x`.
fn conjugate_gradient<F>(op: F, b: &[f64], x: &mut [f64], rel_tol: f64, max_iters: usize)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let ax = op(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut pdir = r.clone();
    let mut rr = dot(&r, &r);
    let stop = (rel_tol * norm2(b)).powi(2);
    for _ in 0..max_iters {
        if rr <= stop || rr == 0.0 {
            break;
        }
        let ap = op(&pdir);
        let pap = dot(&pdir, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(pdir.iter().zip(&ap)) {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in pdir.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = seeded(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (DesignMatrix::dense(n, d, data).unwrap(), y)
    }

    fn tight() -> DantzigParams {
        DantzigParams::new(1e-9, 100_000).unwrap()
    }

    /// Exact `d = 2` optimum: the LP optimum sits on a pairwise intersection
    /// of the lines `g_i . w = c_i +- b` and the axes.
    fn vertex_oracle(p: &DantzigProblem<'_>) -> f64 {
        let c = p.rhs();
        let g0 = p.gram(&[1.0, 0.0]);
        let g1 = p.gram(&[0.0, 1.0]);
        let b = p.bound();
        let mut lines = vec![([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)];
        for i in 0..2 {
            for s in [-1.0, 1.0] {
                lines.push(([g0[i], g1[i]], c[i] + s * b));
            }
        }
        let mut best = f64::INFINITY;
        for a in 0..lines.len() {
            for e in a + 1..lines.len() {
                let ([p1, q1], r1) = lines[a];
                let ([p2, q2], r2) = lines[e];
                let det = p1 * q2 - p2 * q1;
                if det.abs() < 1e-14 {
                    continue;
                }
                let w = [(r1 * q2 - r2 * q1) / det, (p1 * r2 - p2 * r1) / det];
                if p.value_of(&w, &c) <= b * (1.0 + 1e-12) {
                    best = best.min(w[0].abs() + w[1].abs());
                }
            }
        }
        best
    }

    #[test]
    fn methods_agree() {
        let (x, y) = random(40, 12, 11);
        let c_inf = norm_inf(&x.t_matvec(&y).unwrap()) / 40.0;
        let p = DantzigProblem::new(&x, &y, 40, 0.2 * c_inf).unwrap();
        let ipm = solve_dantzig(
            &p,
            &DantzigParams {
                method: DantzigMethod::InteriorPoint,
                ..tight()
            },
        )
        .unwrap();
        let admm = solve_dantzig(&p, &tight()).unwrap();
        assert!(ipm.converged && admm.converged);
        assert!((ipm.objective - admm.objective).abs() <= 1e-6 * ipm.objective);
    }

    #[test]
    fn newton_solves_agree() {
        // Few rows, so G is rank deficient.
        let (x, y) = random(60, 150, 12);
        let c_inf = norm_inf(&x.t_matvec(&y).unwrap()) / 60.0;
        let p = DantzigProblem::new(&x, &y, 60, 0.3 * c_inf).unwrap();
        let c = p.rhs();
        let mut x0 = vec![0.0; 150];
        conjugate_gradient(|v| p.gram(v), &c, &mut x0, 1e-14, 5000);
        let params = DantzigParams::new(1e-6, 200).unwrap();
        let (wd, _, cd) = interior_point(&p, &c, x0.clone(), &params, NewtonSolve::Dense).unwrap();
        let (wl, _, cl) = interior_point(&p, &c, x0.clone(), &params, NewtonSolve::LowRank).unwrap();
        let (wi, _, _) = interior_point(&p, &c, x0, &params, NewtonSolve::Iterative).unwrap();
        assert!(cd && cl);
        assert!(
            (norm1(&wd) - norm1(&wl)).abs() <= 1e-6 * norm1(&wd),
            "{} vs {}",
            norm1(&wd),
            norm1(&wl)
        );
        // The iterative solve may stall short of the tolerance but stays close.
        assert!(
            (norm1(&wd) - norm1(&wi)).abs() <= 1e-5 * norm1(&wd),
            "{} vs {}",
            norm1(&wd),
            norm1(&wi)
        );
    }

    #[test]
    fn zero_when_origin_feasible() {
        let (x, y) = random(40, 5, 1);
        let c_inf = norm_inf(&x.t_matvec(&y).unwrap()) / 40.0;
        let p = DantzigProblem::new(&x, &y, 40, c_inf).unwrap();
        let r = solve_dantzig(&p, &tight()).unwrap();
        assert!(r.w.iter().all(|v| *v == 0.0));
        assert!(r.converged);
    }

    #[test]
    fn scaled_identity_example() {
        // X = sqrt(n) I, y = 2 sqrt(n) e1, tau = 1: w = (1, 0, ..), value 1.
        let n = 4;
        let x = DesignMatrix::dense(n, n, {
            let mut v = vec![0.0; n * n];
            (0..n).for_each(|j| v[j * n + j] = (n as f64).sqrt());
            v
        })
        .unwrap();
        let mut y = vec![0.0; n];
        y[0] = 2.0 * (n as f64).sqrt();
        let p = DantzigProblem::new(&x, &y, n, 1.0).unwrap();
        let r = solve_dantzig(&p, &tight()).unwrap();
        assert!((r.w[0] - 1.0).abs() < 1e-6, "{:?}", r.w);
        assert!(r.w[1..].iter().all(|v| v.abs() < 1e-6));
        assert!((check_constraint(&p, &r.w).unwrap().0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_dimensional_matches_vertex_oracle() {
        for seed in 0..10 {
            let (x, y) = random(30, 2, seed);
            let c_inf = norm_inf(&x.t_matvec(&y).unwrap()) / 30.0;
            let p = DantzigProblem::new(&x, &y, 30, 0.4 * c_inf).unwrap();
            let oracle = vertex_oracle(&p);
            for method in [DantzigMethod::Admm, DantzigMethod::InteriorPoint] {
                let r = solve_dantzig(&p, &DantzigParams { method, ..tight() }).unwrap();
                assert!(r.certificate <= p.bound() * (1.0 + 1e-6));
                assert!(
                    (r.objective - oracle).abs() <= 1e-5 * oracle.max(1.0),
                    "seed {seed} {method}: {} vs {oracle}",
                    r.objective
                );
            }
        }
    }

    #[test]
    fn noiseless_recovery() {
        let (x, _) = random(80, 20, 4);
        let mut w_true = vec![0.0; 20];
        w_true[3] = 1.5;
        w_true[11] = -2.0;
        let y = x.matvec(&w_true).unwrap();
        let p = DantzigProblem::new(&x, &y, 80, 1e-6).unwrap();
        let r = solve_dantzig(&p, &tight()).unwrap();
        let err: f64 =
            r.w.iter()
                .zip(&w_true)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn returned_point_is_feasible_even_when_capped() {
        let (x, y) = random(50, 30, 6);
        let p = DantzigProblem::new(&x, &y, 50, 0.01).unwrap();
        for method in [DantzigMethod::InteriorPoint, DantzigMethod::Admm] {
            let params = DantzigParams {
                method,
                ..DantzigParams::new(1e-6, 5).unwrap()
            };
            let r = solve_dantzig(&p, &params).unwrap();
            assert!(r.certificate <= 0.01 * (1.0 + 1e-6));
            assert!(!r.converged);
        }
    }

    #[test]
    fn no_feasible_sparse_perturbation_improves() {
        // Local l1 optimality: moving along random directions and restoring
        // feasibility never lowers the objective noticeably.
        let (x, y) = random(60, 8, 9);
        let c_inf = norm_inf(&x.t_matvec(&y).unwrap()) / 60.0;
        let p = DantzigProblem::new(&x, &y, 60, 0.3 * c_inf).unwrap();
        let r = solve_dantzig(&p, &tight()).unwrap();
        let mut rng = seeded(2);
        for _ in 0..200 {
            let dir: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0) * 1e-3).collect();
            let cand: Vec<f64> = r.w.iter().zip(&dir).map(|(a, b)| a + b).collect();
            if check_constraint(&p, &cand).unwrap().1 {
                assert!(norm1(&cand) >= r.objective - 1e-7);
            }
        }
    }
}
