//! Accelerated proximal coordinate gradient (APCG), strongly convex variant,
//! with single-coordinate blocks sampled uniformly.
//!
//! With `L_j = ||c_j||^2/n + lambda`, a strong-convexity estimate `mu` in the
//! `L`-weighted norm (never below `lambda / max_j L_j`) and
//! `alpha = sqrt(mu)/d`, one step is
//!
//! ```text
//! y      = (x + alpha z) / (1 + alpha)
//! z~     = (1 - alpha) z + alpha y
//! z+     = z~ except z+_i = prox_{tau'/(d alpha L_i)}(z~_i - grad_i f(y)/(d alpha L_i))
//! x+     = y + d alpha (z+ - z) + d alpha^2 (z - y)
//! ```
//!
//! `x` and `z` are never formed explicitly inside an epoch. Both are kept as
//! combinations of two stored vectors, `x = a1 U + a2 V`, `z = b1 U + b2 V`,
//! together with `C U` and `C V`. The dense part of a step only changes the
//! 2x2 coefficients; the coordinate change touches `U_i`, `V_i` and two
//! `O(nnz(c_i))` residual updates. The representation is folded back to
//! `U = x`, `V = z` at the end of every epoch.

use rand::Rng;

use super::{
    certificate_from_gradient, check_start, coordinate_polish, soft_threshold, CompositeProblem, SolverParams,
    SolverResult,
};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Epochs between momentum-restart checks.
const RESTART_WINDOW: usize = 10;
/// Initial strong-convexity estimate, in the `L`-weighted norm.
const MU_START: f64 = 0.1;

pub fn solve_apcg(p: &CompositeProblem<'_>, params: &SolverParams) -> Result<SolverResult> {
    solve_apcg_from(p, params, None)
}

pub fn solve_apcg_from(p: &CompositeProblem<'_>, params: &SolverParams, w0: Option<&[f64]>) -> Result<SolverResult> {
    let lambda = p.lambda();
    if lambda <= 0.0 {
        return Err(Error::invalid(
            "APCG needs lambda > 0; add a small ridge term for the pure l1 case",
        ));
    }
    let start = check_start(p, w0)?;
    let c = p.data();
    let b = p.target();
    let d = p.dim();
    let n_scale = p.n_scale();
    let tau = p.tau_prime();

    let lips: Vec<f64> = (0..d).map(|j| c.column(j).norm_sq() / n_scale + lambda).collect();
    let l_max = lips.iter().cloned().fold(0.0, f64::max);
    // lambda / L_max is a certified lower bound on the strong convexity but
    // usually far too pessimistic for sparse problems. Start from a rough
    // estimate and halve it whenever a window ends with the objective up.
    let mu_floor = (lambda / l_max).min(1.0);
    let mut mu = mu_floor.max(MU_START);
    let mut alpha = mu.sqrt() / d as f64;
    let ctb: Vec<f64> = (0..d).map(|j| c.column(j).dot(b)).collect();
    let cert_bound = 10.0 * params.tol * p.certificate_scale();

    let mut st = State::new(p, start);
    let mut rng = seeded(params.seed);
    let mut obj = st.objective(p);
    let mut window_start_obj = obj;
    let mut epochs = 0;

    while epochs < params.max_epochs {
        let d_alpha = d as f64 * alpha;
        for _ in 0..d {
            let i = rng.random_range(0..d);
            let col = c.column(i);
            let [a1, a2] = st.xa;
            let [b1, b2] = st.zb;
            let y = [(a1 + alpha * b1) / (1.0 + alpha), (a2 + alpha * b2) / (1.0 + alpha)];
            let (ui, vi) = (st.u[i], st.v[i]);
            let grad_i =
                (y[0] * col.dot(&st.cu) + y[1] * col.dot(&st.cv) - ctb[i]) / n_scale + lambda * (y[0] * ui + y[1] * vi);
            let zt = [(1.0 - alpha) * b1 + alpha * y[0], (1.0 - alpha) * b2 + alpha * y[1]];
            let zt_i = zt[0] * ui + zt[1] * vi;
            let step = d_alpha * lips[i];
            let delta = soft_threshold(zt_i - grad_i / step, tau / step) - zt_i;

            let xa = [
                y[0] + d_alpha * (zt[0] - b1) + d_alpha * alpha * (b1 - y[0]),
                y[1] + d_alpha * (zt[1] - b2) + d_alpha * alpha * (b2 - y[1]),
            ];
            st.xa = xa;
            st.zb = zt;
            if delta != 0.0 {
                // Solve [xa; zt] s = [d_alpha delta; delta] for the U/V update.
                let det = xa[0] * zt[1] - xa[1] * zt[0];
                let (px, pz) = (d_alpha * delta, delta);
                let s1 = (px * zt[1] - xa[1] * pz) / det;
                let s2 = (xa[0] * pz - px * zt[0]) / det;
                st.u[i] += s1;
                st.v[i] += s2;
                col.axpy(s1, &mut st.cu);
                col.axpy(s2, &mut st.cv);
            }
        }
        epochs += 1;
        st.fold();
        if epochs % RESTART_WINDOW == 0 {
            st.refresh(p);
        }

        let new_obj = st.objective(p);
        let rel = (obj - new_obj) / obj.abs().max(f64::MIN_POSITIVE);
        obj = new_obj;
        if (0.0..params.tol).contains(&rel) {
            // x carries rounding-level entries where the optimum is zero;
            // test the certificate at a polished copy.
            let mut w = st.u.clone();
            let mut r = st.x_residual(b);
            coordinate_polish(p, &mut w, &mut r);
            let grad = p.gradient_from_residual(&r, &w);
            if certificate_from_gradient(&grad, &w, tau) <= cert_bound {
                return Ok(SolverResult::new(p, w, epochs, true));
            }
        }
        if epochs % RESTART_WINDOW == 0 {
            if obj > window_start_obj {
                st.restart();
                mu = (mu / 2.0).max(mu_floor);
                alpha = mu.sqrt() / d as f64;
            }
            window_start_obj = obj;
        }
    }
    let mut r = st.x_residual(b);
    let mut w = st.u;
    coordinate_polish(p, &mut w, &mut r);
    Ok(SolverResult::new(p, w, epochs, false))
}

/// `x = xa[0] U + xa[1] V`, `z = zb[0] U + zb[1] V`, `cu = C U`, `cv = C V`.
struct State {
    u: Vec<f64>,
    v: Vec<f64>,
    cu: Vec<f64>,
    cv: Vec<f64>,
    xa: [f64; 2],
    zb: [f64; 2],
}

impl State {
    fn new(p: &CompositeProblem<'_>, w0: Vec<f64>) -> Self {
        let cu = p.data().matvec(&w0).expect("length checked");
        Self {
            v: w0.clone(),
            cv: cu.clone(),
            u: w0,
            cu,
            xa: [1.0, 0.0],
            zb: [0.0, 1.0],
        }
    }

    /// Re-express so that `U = x`, `V = z`.
    fn fold(&mut self) {
        let ([a1, a2], [b1, b2]) = (self.xa, self.zb);
        for (u, v) in self.u.iter_mut().zip(self.v.iter_mut()) {
            let (x, z) = (a1 * *u + a2 * *v, b1 * *u + b2 * *v);
            *u = x;
            *v = z;
        }
        for (u, v) in self.cu.iter_mut().zip(self.cv.iter_mut()) {
            let (x, z) = (a1 * *u + a2 * *v, b1 * *u + b2 * *v);
            *u = x;
            *v = z;
        }
        self.xa = [1.0, 0.0];
        self.zb = [0.0, 1.0];
    }

    /// Recomputes `C U`, `C V` from scratch to drop accumulated rounding.
    fn refresh(&mut self, p: &CompositeProblem<'_>) {
        self.cu = p.data().matvec(&self.u).expect("length d");
        self.cv = p.data().matvec(&self.v).expect("length d");
    }

    /// Drops the momentum: `z <- x`. Call only when folded.
    fn restart(&mut self) {
        self.v.copy_from_slice(&self.u);
        self.cv.copy_from_slice(&self.cu);
    }

    /// `C x - b`, valid when folded.
    fn x_residual(&self, b: &[f64]) -> Vec<f64> {
        self.cu.iter().zip(b).map(|(c, bi)| c - bi).collect()
    }

    fn objective(&self, p: &CompositeProblem<'_>) -> f64 {
        let r = self.x_residual(p.target());
        p.objective_from_residual(&r, &self.u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{norm_inf, DesignMatrix};
    use crate::prox::solve_ista;

    fn random(n: usize, d: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = seeded(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (DesignMatrix::dense(n, d, data).unwrap(), b)
    }

    #[test]
    fn requires_positive_lambda() {
        let (x, b) = random(5, 3, 1);
        let p = CompositeProblem::new(&x, &b, 5, 0.0, 0.1).unwrap();
        assert!(solve_apcg(&p, &SolverParams::default()).is_err());
    }

    #[test]
    fn zero_when_threshold_dominates() {
        let (x, b) = random(40, 15, 2);
        let tau = norm_inf(&x.t_matvec(&b).unwrap()) / 40.0;
        let p = CompositeProblem::new(&x, &b, 40, 0.1, tau * 1.0001).unwrap();
        let res = solve_apcg(&p, &SolverParams::new(1e-10, 1000, 3).unwrap()).unwrap();
        assert!(res.w.iter().all(|&v| v == 0.0));
        assert!(res.converged);
    }

    #[test]
    fn matches_ista_on_random_elastic_net() {
        let (x, b) = random(50, 20, 7);
        let p = CompositeProblem::new(&x, &b, 50, 0.1, 1e-2).unwrap();
        let ista = solve_ista(&p, &SolverParams::new(1e-14, 1_000_000, 0).unwrap()).unwrap();
        let apcg = solve_apcg(&p, &SolverParams::new(1e-13, 100_000, 5).unwrap()).unwrap();
        assert!(apcg.converged);
        assert!(apcg.objective <= ista.objective + 1e-8 * ista.objective.abs());
    }

    #[test]
    fn sparse_and_dense_data_agree() {
        let (x, b) = random(30, 12, 11);
        let xs = x.to_sparse();
        let params = SolverParams::new(1e-12, 100_000, 1).unwrap();
        let pd = CompositeProblem::new(&x, &b, 30, 1e-2, 1e-2).unwrap();
        let ps = CompositeProblem::new(&xs, &b, 30, 1e-2, 1e-2).unwrap();
        let rd = solve_apcg(&pd, &params).unwrap();
        let rs = solve_apcg(&ps, &params).unwrap();
        assert!((rd.objective - rs.objective).abs() <= 1e-9 * rd.objective);
    }

    #[test]
    fn warm_start_from_optimum_stops_quickly() {
        let (x, b) = random(30, 10, 4);
        let p = CompositeProblem::new(&x, &b, 30, 1e-2, 1e-2).unwrap();
        let params = SolverParams::new(1e-12, 100_000, 1).unwrap();
        let cold = solve_apcg(&p, &params).unwrap();
        let warm = solve_apcg_from(&p, &params, Some(&cold.w)).unwrap();
        assert!(warm.converged);
        assert!(warm.epochs <= 2, "{}", warm.epochs);
    }
}
