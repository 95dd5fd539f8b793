use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DesignMatrix;
use crate::rng::seeded;

/// Largest dense synthetic matrix `gen_synthetic` will allocate (entries).
pub const SYNTH_ENTRY_LIMIT: u64 = 400_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub s_true: usize,
    /// Half-width of the uniform noise before scaling.
    pub noise_mag: f64,
    pub seed: u64,
    /// Multiply `X` and the noise by `sqrt(3/n)`, giving entries of variance `1/n`.
    pub scale_to_var_1_over_n: bool,
}

impl SyntheticSpec {
    /// `n = 10^4`, `d = 10^5`, 100 nonzeros, noise 0.1. About 8 GB dense.
    pub fn full(seed: u64) -> Self {
        Self {
            n: 10_000,
            d: 100_000,
            s_true: 100,
            noise_mag: 0.1,
            seed,
            scale_to_var_1_over_n: true,
        }
    }

    /// `n = 2000`, `d = 10^4`, 50 nonzeros, noise 0.1.
    pub fn desk(seed: u64) -> Self {
        Self {
            n: 2000,
            d: 10_000,
            s_true: 50,
            noise_mag: 0.1,
            seed,
            scale_to_var_1_over_n: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::invalid("synthetic n and d must be positive"));
        }
        if self.s_true > self.d {
            return Err(Error::invalid(format!("s_true={} exceeds d={}", self.s_true, self.d)));
        }
        if !(self.noise_mag >= 0.0 && self.noise_mag.is_finite()) {
            return Err(Error::invalid("noise_mag must be finite and >= 0"));
        }
        let entries = self.n as u64 * self.d as u64;
        if entries > SYNTH_ENTRY_LIMIT {
            return Err(Error::invalid(format!(
                "synthetic matrix has {entries} entries, above the {SYNTH_ENTRY_LIMIT} dense limit"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub u_star: Vec<f64>,
}

/// `y = X u* + xi` with `X` and `xi` uniform, `u*` uniform on `s_true`
/// uniformly chosen coordinates.
///
/// Draw order from one seeded stream: `X` column-major, the support, the
/// support values in increasing coordinate order, then `xi`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = seeded(spec.seed);
    let scale = if spec.scale_to_var_1_over_n {
        (3.0 / n as f64).sqrt()
    } else {
        1.0
    };
    let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..=1.0) * scale).collect();
    let mut support = sample(&mut rng, d, spec.s_true).into_vec();
    support.sort_unstable();
    let mut u_star = vec![0.0; d];
    for &j in &support {
        // Zero has probability zero but would shrink the support.
        let mut v = 0.0;
        while v == 0.0 {
            v = rng.random_range(-1.0..=1.0);
        }
        u_star[j] = v;
    }
    let x = DesignMatrix::dense(n, d, data)?;
    let mut y = x.matvec(&u_star)?;
    if spec.noise_mag > 0.0 {
        for yi in y.iter_mut() {
            *yi += rng.random_range(-spec.noise_mag..=spec.noise_mag) * scale;
        }
    }
    Ok(SyntheticData { x, y, u_star })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            n: 50,
            d: 80,
            s_true: 7,
            noise_mag: noise,
            seed: 3,
            scale_to_var_1_over_n: true,
        }
    }

    #[test]
    fn noiseless_target_is_exact() {
        let g = gen_synthetic(&small(0.0)).unwrap();
        assert_eq!(g.y, g.x.matvec(&g.u_star).unwrap());
    }

    #[test]
    fn support_size_is_exact() {
        let g = gen_synthetic(&small(0.1)).unwrap();
        assert_eq!(g.u_star.iter().filter(|v| **v != 0.0).count(), 7);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gen_synthetic(&small(0.1)).unwrap();
        let b = gen_synthetic(&small(0.1)).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        let c = gen_synthetic(&SyntheticSpec { seed: 4, ..small(0.1) }).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn entry_variance_near_one_over_n() {
        let spec = SyntheticSpec {
            n: 2000,
            d: 50,
            s_true: 5,
            noise_mag: 0.1,
            seed: 1,
            scale_to_var_1_over_n: true,
        };
        let g = gen_synthetic(&spec).unwrap();
        let vals = g.x.to_dense_data();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((var * 2000.0 - 1.0).abs() < 0.05, "{}", var * 2000.0);
    }

    #[test]
    fn presets_and_limits() {
        let p = SyntheticSpec::full(0);
        assert_eq!((p.n, p.d, p.s_true, p.noise_mag), (10_000, 100_000, 100, 0.1));
        assert!(gen_synthetic(&p).is_err());
        let d = SyntheticSpec::desk(0);
        assert_eq!((d.n, d.d, d.s_true), (2000, 10_000, 50));
        assert!(gen_synthetic(&SyntheticSpec {
            s_true: 81,
            ..small(0.0)
        })
        .is_err());
    }
}
