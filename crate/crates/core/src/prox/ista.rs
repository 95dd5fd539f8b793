use super::{certificate_from_gradient, check_start, soft_threshold, CompositeProblem, SolverParams, SolverResult};
use crate::error::Result;

/// Proximal gradient with constant step `1/L`. Reference solver for APCG.
pub fn solve_ista(p: &CompositeProblem<'_>, params: &SolverParams) -> Result<SolverResult> {
    solve_ista_from(p, params, None)
}

/// [`solve_ista`] started from `w0`.
///
/// The objective is non-increasing over iterations: a step that would raise
/// it doubles `L` and is retried.
pub fn solve_ista_from(p: &CompositeProblem<'_>, params: &SolverParams, w0: Option<&[f64]>) -> Result<SolverResult> {
    let mut w = check_start(p, w0)?;
    let mut lip = p.lipschitz_estimate();
    let tau = p.tau_prime();
    let cert_bound = 10.0 * params.tol * p.certificate_scale();

    let mut r = p.residual(&w);
    let mut obj = p.objective_from_residual(&r, &w);
    let mut rel_decrease = f64::INFINITY;
    let mut epochs = 0;
    let mut converged = false;

    loop {
        let grad = p.gradient_from_residual(&r, &w);
        if rel_decrease < params.tol && certificate_from_gradient(&grad, &w, tau) <= cert_bound {
            converged = true;
            break;
        }
        if epochs >= params.max_epochs {
            break;
        }
        epochs += 1;

        let mut stalled = false;
        loop {
            let cand: Vec<f64> = w
                .iter()
                .zip(&grad)
                .map(|(&wj, &gj)| soft_threshold(wj - gj / lip, tau / lip))
                .collect();
            let r_new = p.residual(&cand);
            let obj_new = p.objective_from_residual(&r_new, &cand);
            if obj_new <= obj {
                rel_decrease = (obj - obj_new) / obj.abs().max(f64::MIN_POSITIVE);
                w = cand;
                r = r_new;
                obj = obj_new;
                break;
            }
            if obj_new - obj <= 1e-14 * obj.abs() {
                // Increase at rounding level: no further progress possible.
                stalled = true;
                break;
            }
            lip *= 2.0;
        }
        if stalled {
            let grad = p.gradient_from_residual(&r, &w);
            converged = certificate_from_gradient(&grad, &w, tau) <= cert_bound;
            break;
        }
    }
    Ok(SolverResult::new(p, w, epochs, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{norm_inf, DesignMatrix};
    use crate::rng::seeded;
    use rand::Rng;

    fn params(tol: f64) -> SolverParams {
        SolverParams::new(tol, 1_000_000, 0).unwrap()
    }

    #[test]
    fn scalar_lasso_closed_form() {
        let x = DesignMatrix::dense(1, 1, vec![1.0]).unwrap();
        let p = CompositeProblem::new(&x, &[2.0], 1, 0.0, 0.5).unwrap();
        let res = solve_ista(&p, &params(1e-12)).unwrap();
        assert!(res.converged);
        assert!((res.w[0] - soft_threshold(2.0, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn dominant_threshold_gives_zero() {
        let mut rng = seeded(3);
        let data = (0..30 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DesignMatrix::dense(30, 5, data).unwrap();
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tau = norm_inf(&x.t_matvec(&b).unwrap()) / 30.0;
        let p = CompositeProblem::new(&x, &b, 30, 0.0, tau).unwrap();
        let res = solve_ista(&p, &params(1e-10)).unwrap();
        assert!(res.w.iter().all(|&v| v == 0.0));
        assert!(res.converged);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = seeded(8);
        let data = (0..25 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DesignMatrix::dense(25, 12, data).unwrap();
        let b: Vec<f64> = (0..25).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = CompositeProblem::new(&x, &b, 25, 1e-3, 1e-2).unwrap();
        let mut prev = f64::INFINITY;
        let mut w: Option<Vec<f64>> = None;
        for _ in 0..50 {
            let res = solve_ista_from(&p, &SolverParams::new(1e-14, 3, 0).unwrap(), w.as_deref()).unwrap();
            assert!(res.objective <= prev);
            prev = res.objective;
            w = Some(res.w);
        }
    }

    #[test]
    fn max_epochs_reports_not_converged() {
        let mut rng = seeded(1);
        let data = (0..20 * 10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DesignMatrix::dense(20, 10, data).unwrap();
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = CompositeProblem::new(&x, &b, 20, 1e-4, 1e-3).unwrap();
        let res = solve_ista(&p, &SolverParams::new(1e-12, 2, 0).unwrap()).unwrap();
        assert!(!res.converged);
        assert_eq!(res.epochs, 2);
    }

    #[test]
    fn ridge_when_tau_is_zero() {
        // X = I, lambda = 1: w = y / (1 + n lambda) with n_scale = 1.
        let x = DesignMatrix::identity(3).unwrap();
        let y = [1.0, -2.0, 4.0];
        let p = CompositeProblem::new(&x, &y, 1, 1.0, 0.0).unwrap();
        let res = solve_ista(&p, &params(1e-14)).unwrap();
        for (w, yi) in res.w.iter().zip(y) {
            assert!((w - yi / 2.0).abs() < 1e-10);
        }
    }
}
