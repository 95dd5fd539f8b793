//! Theory quantities: the perturbation `q`, theoretical `sigma`, the sketch
//! distortion `rho(s)`, restricted eigenvalues and recovery errors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use serde::Serialize;

use super::{compress, solve_compressed, solve_original, Formulation, ProblemSpec, SketchParams, SolveOptions};
use crate::error::{Error, Result};
use crate::matrix::{check_len, dot, norm1, norm2, norm_inf, DesignMatrix};
use crate::prox::support_size;
use crate::rng::seeded;
use crate::sketch::SketchOperator;

/// Largest number of supports `restricted_eig` will enumerate.
pub const RE_SUPPORT_LIMIT: u64 = 100_000;

/// `q = (1/n) X^T (A^T A - I) e` computed as `(1/n)[(AX)^T (Ae) - X^T e]`.
/// Returns `(q, ||q||_inf)`.
pub fn compute_q(x: &DesignMatrix, a: &SketchOperator, e: &[f64], n_scale: usize) -> Result<(Vec<f64>, f64)> {
    check_len("residual length", x.n(), e.len())?;
    let x_hat = a.apply_matrix(x)?;
    compute_q_compressed(x, &x_hat, a, e, n_scale)
}

/// [`compute_q`] with `AX` supplied.
pub fn compute_q_compressed(
    x: &DesignMatrix,
    x_hat: &DesignMatrix,
    a: &SketchOperator,
    e: &[f64],
    n_scale: usize,
) -> Result<(Vec<f64>, f64)> {
    check_len("residual length", x.n(), e.len())?;
    check_len("sketched columns", x.d(), x_hat.d())?;
    let ae = a.apply_vec(e)?;
    let sketched = x_hat.t_matvec(&ae)?;
    let plain = x.t_matvec(e)?;
    let n = n_scale as f64;
    let q: Vec<f64> = sketched.iter().zip(&plain).map(|(s, p)| (s - p) / n).collect();
    let q_inf = norm_inf(&q);
    Ok((q, q_inf))
}

/// `multiplier * (eta R / n) * sqrt(ln(d / delta) / m)`
pub fn sigma_theoretical(eta: f64, r: f64, n: usize, d: usize, m: usize, delta: f64, multiplier: f64) -> f64 {
    multiplier * (eta * r / n as f64) * ((d as f64 / delta).ln() / m as f64).sqrt()
}

/// Lower-bound estimate of
/// `rho(s) = max_{||w||_2 <= 1, ||w||_1 <= sqrt(s)} (1/n)|w^T (X^T X - X^^T X^) w|`.
///
/// Each trial draws a random support of size `min(s, d)` and takes the exact
/// maximizer on it (top eigenvector of the restricted difference), then also
/// tries its normalized mixture with the best vector so far. The result is a
/// running maximum, so it never decreases as `trials` grows.
pub fn rho_estimate(
    x: &DesignMatrix,
    a: &SketchOperator,
    s: usize,
    n_scale: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_len("sketch input rows", a.n(), x.n())?;
    if s == 0 || trials == 0 {
        return Err(Error::invalid("rho_estimate needs s >= 1 and trials >= 1"));
    }
    let d = x.d();
    let k = s.min(d);
    let n = n_scale as f64;
    let mut rng = seeded(seed);
    // Columns of X and AX on demand; the sketch of a column is reused.
    let mut hat_cache: Vec<Option<Vec<f64>>> = vec![None; d];
    let mut plain_cache: Vec<Option<Vec<f64>>> = vec![None; d];
    let mut best = 0.0_f64;
    let mut best_w: Option<Vec<f64>> = None;

    let form = |w: &[f64], plain: &[Option<Vec<f64>>], hat: &[Option<Vec<f64>>]| -> f64 {
        let mut xw = vec![0.0; x.n()];
        let mut aw = vec![0.0; a.m()];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                let pc = plain[j].as_ref().expect("cached");
                let hc = hat[j].as_ref().expect("cached");
                xw.iter_mut().zip(pc).for_each(|(o, v)| *o += wj * v);
                aw.iter_mut().zip(hc).for_each(|(o, v)| *o += wj * v);
            }
        }
        (dot(&xw, &xw) - dot(&aw, &aw)).abs() / n
    };

    for _ in 0..trials {
        let mut support: Vec<usize> = sample(&mut rng, d, k).into_vec();
        support.sort_unstable();
        for &j in &support {
            if plain_cache[j].is_none() {
                let col: Vec<f64> = {
                    let mut v = vec![0.0; x.n()];
                    x.column(j).axpy(1.0, &mut v);
                    v
                };
                hat_cache[j] = Some(a.apply_vec(&col)?);
                plain_cache[j] = Some(col);
            }
        }
        let diff = DMatrix::from_fn(k, k, |r, c| {
            let (jr, jc) = (support[r], support[c]);
            let p = dot(plain_cache[jr].as_ref().unwrap(), plain_cache[jc].as_ref().unwrap());
            let h = dot(hat_cache[jr].as_ref().unwrap(), hat_cache[jc].as_ref().unwrap());
            (p - h) / n
        });
        let eig = SymmetricEigen::new(diff);
        let (idx, _) =
            eig.eigenvalues.iter().enumerate().fold(
                (0, -1.0),
                |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc },
            );
        let mut w = vec![0.0; d];
        for (r, &j) in support.iter().enumerate() {
            w[j] = eig.eigenvectors[(r, idx)];
        }
        // A unit vector with k nonzeros has ||w||_1 <= sqrt(k) <= sqrt(s).
        let val = form(&w, &plain_cache, &hat_cache);
        let mut cands = vec![(val, w.clone())];
        if let Some(bw) = &best_w {
            for sign in [1.0, -1.0] {
                let mut mix: Vec<f64> = bw.iter().zip(&w).map(|(b, v)| b + sign * v).collect();
                let l2 = norm2(&mix);
                if l2 == 0.0 {
                    continue;
                }
                let scale = (1.0 / l2).min((s as f64).sqrt() / norm1(&mix));
                mix.iter_mut().for_each(|v| *v *= scale);
                cands.push((form(&mix, &plain_cache, &hat_cache), mix));
            }
        }
        for (v, cand) in cands {
            if v > best {
                best = v;
                best_w = Some(cand);
            }
        }
        if best_w.is_none() {
            best_w = Some(w);
        }
    }
    Ok(best)
}

/// Exact `(phi_min(s), phi_max(s))`: extreme eigenvalues of `(1/n) X_S^T X_S`
/// over all supports `|S| = min(s, d)`. Smaller supports are covered by
/// eigenvalue interlacing.
pub fn restricted_eig(x: &DesignMatrix, s: usize, n_scale: usize) -> Result<(f64, f64)> {
    let d = x.d();
    if s == 0 {
        return Err(Error::invalid("sparsity level must be at least 1"));
    }
    let k = s.min(d);
    let count = binomial(d as u64, k as u64);
    if count > RE_SUPPORT_LIMIT {
        return Err(Error::TooLarge {
            d,
            s,
            limit: RE_SUPPORT_LIMIT,
        });
    }
    let n = n_scale as f64;
    if k == 1 {
        let diag = x.col_norms_sq();
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Ok((lo / n, hi / n));
    }
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut v = vec![0.0; x.n()];
            x.column(j).axpy(1.0, &mut v);
            v
        })
        .collect();
    let mut gram = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let g = dot(&cols[i], &cols[j]) / n;
            gram[i * d + j] = g;
            gram[j * d + i] = g;
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut support: Vec<usize> = (0..k).collect();
    loop {
        let sub = DMatrix::from_fn(k, k, |r, c| gram[support[r] * d + support[c]]);
        let eig = SymmetricEigen::new(sub);
        for &v in eig.eigenvalues.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !next_combination(&mut support, d) {
            break;
        }
    }
    Ok((lo, hi))
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Advances a sorted `k`-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub err_l1: f64,
    pub err_l2: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Differences `||w_hat - w_star||_1`, `||w_hat - w_star||_2` and support
/// recovery. The reference support is the `s_true` largest entries of
/// `w_star` when given, else its entries above `1e-8 ||w_star||_inf`.
pub fn error_report(w_star: &[f64], w_hat: &[f64], s_true: Option<usize>) -> Result<ErrorReport> {
    check_len("estimate length", w_star.len(), w_hat.len())?;
    let delta: Vec<f64> = w_hat.iter().zip(w_star).map(|(a, b)| a - b).collect();
    let truth = match s_true {
        Some(s) => {
            let mut idx: Vec<usize> = (0..w_star.len()).collect();
            idx.sort_by(|&a, &b| w_star[b].abs().total_cmp(&w_star[a].abs()).then(a.cmp(&b)));
            let mut mask = vec![false; w_star.len()];
            for &j in idx.iter().take(s) {
                mask[j] = w_star[j] != 0.0;
            }
            mask
        }
        None => support_mask(w_star),
    };
    let found = support_mask(w_hat);
    let hit = truth.iter().zip(&found).filter(|(t, f)| **t && **f).count() as f64;
    let n_found = found.iter().filter(|f| **f).count() as f64;
    let n_truth = truth.iter().filter(|t| **t).count() as f64;
    Ok(ErrorReport {
        err_l1: norm1(&delta),
        err_l2: norm2(&delta),
        precision: if n_found == 0.0 { 1.0 } else { hit / n_found },
        recall: if n_truth == 0.0 { 1.0 } else { hit / n_truth },
    })
}

fn support_mask(w: &[f64]) -> Vec<bool> {
    let t = 1e-8 * norm_inf(w);
    w.iter().map(|v| v.abs() > t && *v != 0.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnoseOptions {
    /// Sparsity level for `rho` and the restricted eigenvalues; defaults to
    /// the compressed solution's support size.
    pub s: Option<usize>,
    pub rho_trials: usize,
    /// Multiplier in the theoretical `sigma`.
    pub sigma_multiplier: f64,
    /// Also solve the original problem and report `q`, `eta` and errors.
    pub with_original: bool,
    /// Keep the full `q` vector in the report.
    pub keep_q: bool,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            s: None,
            rho_trials: 200,
            sigma_multiplier: 1.0,
            with_original: true,
            keep_q: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub family: String,
    pub formulation: Formulation,
    pub s: usize,
    pub eta: Option<f64>,
    pub q: Option<Vec<f64>>,
    pub q_inf: Option<f64>,
    pub sigma_theory: Option<f64>,
    /// Lower-bound estimate of `rho(s)`.
    pub rho_s: f64,
    /// Level `k` at which `phi_min(k)` and `rho(k)` enter `Lambda`:
    /// `16 s` for the lasso and elastic net, `4 s` for the Dantzig selector.
    pub lambda_level: usize,
    pub rho_lambda_level: f64,
    pub phi_min: Option<f64>,
    pub phi_max: Option<f64>,
    /// `phi_min(16s) - 2 rho(16s)` or `phi_min(4s) - rho(4s)`.
    #[serde(rename = "Lambda")]
    pub lambda_eff: Option<f64>,
    pub lambda_negative: bool,
    pub err_l1: Option<f64>,
    pub err_l2: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub objective_hat: f64,
    pub objective_orig: Option<f64>,
    pub support_hat: usize,
}

/// Solves the compressed problem (and the original one when asked) and
/// collects every diagnostic the instance size allows.
pub fn diagnose(
    x: &DesignMatrix,
    y: &[f64],
    spec: &ProblemSpec,
    sketch: &SketchParams,
    opts: &SolveOptions,
    dopts: &DiagnoseOptions,
) -> Result<DiagnosticsReport> {
    spec.validate()?;
    let n = x.n();
    let op = sketch.build(n)?;
    let data = compress(x, y, sketch)?;
    let hat = solve_compressed(&data, n, spec, opts, None)?;
    let s = dopts.s.unwrap_or(hat.support_size).max(1);

    let (lambda_level, rho_weight) = match spec.formulation {
        Formulation::Dantzig => (4 * s, 1.0),
        _ => (16 * s, 2.0),
    };
    let rho_s = rho_estimate(x, &op, s, n, dopts.rho_trials, sketch.seed)?;
    let rho_lambda_level = rho_estimate(x, &op, lambda_level, n, dopts.rho_trials, sketch.seed)?;
    let (phi_min, phi_max) = match restricted_eig(x, lambda_level, n) {
        Ok((lo, hi)) => (Some(lo), Some(hi)),
        Err(Error::TooLarge { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    let lambda_eff = phi_min.map(|p| p - rho_weight * rho_lambda_level);

    let mut report = DiagnosticsReport {
        n,
        d: x.d(),
        m: sketch.m,
        family: sketch.family.to_string(),
        formulation: spec.formulation,
        s,
        eta: None,
        q: None,
        q_inf: None,
        sigma_theory: None,
        rho_s,
        lambda_level,
        rho_lambda_level,
        phi_min,
        phi_max,
        lambda_eff,
        lambda_negative: lambda_eff.is_some_and(|l| l < 0.0),
        err_l1: None,
        err_l2: None,
        precision: None,
        recall: None,
        objective_hat: hat.objective,
        objective_orig: None,
        support_hat: support_size(&hat.w),
    };
    if dopts.with_original {
        let orig = solve_original(x, y, spec, opts, None)?;
        let mut e = x.matvec(&orig.w)?;
        e.iter_mut().zip(y).for_each(|(a, b)| *a -= b);
        let eta = norm2(&e);
        let (q, q_inf) = compute_q_compressed(x, &data.x_hat, &op, &e, n)?;
        let err = error_report(&orig.w, &hat.w, None)?;
        report.eta = Some(eta);
        report.q_inf = Some(q_inf);
        report.q = dopts.keep_q.then_some(q);
        report.sigma_theory = Some(sigma_theoretical(
            eta,
            x.col_norm_bound(),
            n,
            x.d(),
            sketch.m,
            spec.delta,
            dopts.sigma_multiplier,
        ));
        report.err_l1 = Some(err.err_l1);
        report.err_l2 = Some(err.err_l2);
        report.precision = Some(err.precision);
        report.recall = Some(err.recall);
        report.objective_orig = Some(orig.objective);
    }
    Ok(report)
}

/// Random dense matrix with entries uniform in `[-1, 1]`.
#[cfg(test)]
pub(crate) fn random_dense(n: usize, d: usize, seed: u64) -> DesignMatrix {
    use rand::Rng;
    let mut rng = seeded(seed);
    let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    DesignMatrix::dense(n, d, data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::SketchFamily;

    #[test]
    fn sigma_formula_example() {
        let s = sigma_theoretical(1.0, 1.0, 100, 1000, 100, 0.01, 1.0);
        let expect = (1.0 / 100.0) * ((1e5f64).ln() / 100.0).sqrt();
        assert!((s - expect).abs() < 1e-15);
        assert!((s - 0.003393).abs() < 1e-6);
        assert_eq!(sigma_theoretical(0.0, 1.0, 100, 1000, 100, 0.01, 1.0), 0.0);
        let quad = sigma_theoretical(1.0, 1.0, 100, 1000, 400, 0.01, 1.0);
        assert!((2.0 * quad - s).abs() < 1e-15);
    }

    #[test]
    fn q_vanishes_for_orthonormal_sketch_and_zero_residual() {
        let x = random_dense(32, 6, 1);
        let a = SketchOperator::build(SketchFamily::Srht, 32, 32, 5).unwrap();
        let e: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let (_, q_inf) = compute_q(&x, &a, &e, 32).unwrap();
        assert!(q_inf < 1e-12);
        let a = SketchOperator::build(SketchFamily::Gaussian, 10, 32, 5).unwrap();
        let (q, q_inf) = compute_q(&x, &a, &[0.0; 32], 32).unwrap();
        assert_eq!(q_inf, 0.0);
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn q_matches_materialized_operator() {
        let (n, d, m) = (30, 8, 12);
        let x = random_dense(n, d, 2);
        let e: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        for fam in SketchFamily::ALL {
            let a = SketchOperator::build(fam, m, n, 11).unwrap();
            let mat = a.materialize();
            // (A^T A - I) e, then X^T, all by explicit loops.
            let ae: Vec<f64> = (0..m).map(|r| (0..n).map(|i| mat[i * m + r] * e[i]).sum()).collect();
            let ata_e: Vec<f64> = (0..n)
                .map(|i| (0..m).map(|r| mat[i * m + r] * ae[r]).sum::<f64>() - e[i])
                .collect();
            let expect: Vec<f64> = (0..d)
                .map(|j| (0..n).map(|i| x.get(i, j) * ata_e[i]).sum::<f64>() / n as f64)
                .collect();
            let (q, _) = compute_q(&x, &a, &e, n).unwrap();
            for (a, b) in q.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{fam}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rho_zero_for_orthonormal_and_monotone_in_trials() {
        let x = random_dense(16, 5, 3);
        let a = SketchOperator::build(SketchFamily::Srht, 16, 16, 2).unwrap();
        assert!(rho_estimate(&x, &a, 2, 16, 20, 1).unwrap() < 1e-12);
        let a = SketchOperator::build(SketchFamily::Gaussian, 6, 16, 2).unwrap();
        let mut prev = 0.0;
        for t in 1..20 {
            let r = rho_estimate(&x, &a, 2, 16, t, 9).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn rho_within_factor_of_mesh_maximum() {
        let (n, d) = (40, 4);
        let x = random_dense(n, d, 4);
        let a = SketchOperator::build(SketchFamily::Rademacher, 10, n, 6).unwrap();
        let mat = a.materialize();
        let ax: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                (0..10)
                    .map(|r| (0..n).map(|i| mat[i * 10 + r] * x.get(i, j)).sum())
                    .collect()
            })
            .collect();
        let mut mesh_max = 0.0_f64;
        for i in 0..d {
            for j in i + 1..d {
                for k in 0..20_000 {
                    let t = std::f64::consts::PI * k as f64 / 20_000.0;
                    let (ci, cj) = (t.cos(), t.sin());
                    let xw: Vec<f64> = (0..n).map(|r| ci * x.get(r, i) + cj * x.get(r, j)).collect();
                    let aw: Vec<f64> = (0..10).map(|r| ci * ax[i][r] + cj * ax[j][r]).collect();
                    mesh_max = mesh_max.max((dot(&xw, &xw) - dot(&aw, &aw)).abs() / n as f64);
                }
            }
        }
        let est = rho_estimate(&x, &a, 2, n, 60, 1).unwrap();
        assert!(est >= mesh_max / 1.5 && est <= mesh_max * 1.5, "{est} vs {mesh_max}");
    }

    #[test]
    fn restricted_eig_identity_and_monotone() {
        let n = 9;
        let scaled: Vec<f64> = DesignMatrix::identity(n)
            .unwrap()
            .to_dense_data()
            .iter()
            .map(|v| v * (n as f64).sqrt())
            .collect();
        let x = DesignMatrix::dense(n, n, scaled).unwrap();
        for s in 1..=4 {
            let (lo, hi) = restricted_eig(&x, s, n).unwrap();
            assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
        let x = random_dense(20, 7, 5);
        let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 1..=7 {
            let (lo, hi) = restricted_eig(&x, s, 20).unwrap();
            assert!(lo <= prev.0 + 1e-12 && hi >= prev.1 - 1e-12);
            prev = (lo, hi);
        }
    }

    #[test]
    fn restricted_eig_guard() {
        let x = random_dense(5, 40, 1);
        assert!(matches!(restricted_eig(&x, 10, 5), Err(Error::TooLarge { .. })));
        assert_eq!(binomial(40, 10), 847_660_528);
        assert_eq!(binomial(5, 5), 1);
    }

    #[test]
    fn error_report_cases() {
        let w = [1.0, 0.0, -2.0];
        let r = error_report(&w, &w, None).unwrap();
        assert_eq!((r.err_l1, r.err_l2, r.precision, r.recall), (0.0, 0.0, 1.0, 1.0));
        let r = error_report(&[0.0, 0.0], &[1.0, 0.0], None).unwrap();
        assert_eq!((r.err_l1, r.err_l2), (1.0, 1.0));
        assert_eq!(r.precision, 0.0);
        let r = error_report(&[3.0, 1.0, 0.0], &[3.0, 0.0, 0.5], Some(1)).unwrap();
        assert_eq!((r.precision, r.recall), (0.5, 1.0));
        assert!(error_report(&[1.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn diagnose_small_instance() {
        let x = random_dense(60, 6, 7);
        let y: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin()).collect();
        let spec = ProblemSpec::new(Formulation::Lasso, 0.0, 1e-2, 1e-3, 0.05).unwrap();
        let sk = SketchParams::new(SketchFamily::Gaussian, 30, 3);
        let dopts = DiagnoseOptions {
            s: Some(1),
            rho_trials: 20,
            ..DiagnoseOptions::default()
        };
        let r = diagnose(&x, &y, &spec, &sk, &SolveOptions::default(), &dopts).unwrap();
        assert_eq!(r.lambda_level, 16);
        // 16 > d, so the restricted eigenvalues cover the whole Gram matrix.
        assert!(r.phi_min.is_some());
        assert_eq!(r.lambda_negative, r.lambda_eff.unwrap() < 0.0);
        assert!(r.eta.unwrap() > 0.0 && r.q_inf.unwrap() > 0.0);
    }
}
