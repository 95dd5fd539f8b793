//! Johnson-Lindenstrauss sketching operators `A` (m x n).
//!
//! Four families: dense Gaussian and Rademacher matrices, CountSketch (one
//! signed nonzero per column, chosen by hashing) and the subsampled
//! randomized Hadamard transform. All operators are deterministic functions
//! of `(family, m, n, seed)`.

mod fwht;

pub use fwht::{fwht_inplace, hadamard_entry};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_len, Column, DesignMatrix};
use crate::rng::{seeded, splitmix64};

/// Default cap on `m * n` for families that store `A` explicitly.
pub const DEFAULT_DENSE_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchFamily {
    Gaussian,
    Rademacher,
    CountSketch,
    Srht,
}

impl SketchFamily {
    pub const ALL: [SketchFamily; 4] = [
        SketchFamily::Gaussian,
        SketchFamily::Rademacher,
        SketchFamily::CountSketch,
        SketchFamily::Srht,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SketchFamily::Gaussian => "gaussian",
            SketchFamily::Rademacher => "rademacher",
            SketchFamily::CountSketch => "count_sketch",
            SketchFamily::Srht => "srht",
        }
    }
}

impl fmt::Display for SketchFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SketchFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" => Ok(SketchFamily::Gaussian),
            "rademacher" => Ok(SketchFamily::Rademacher),
            "count_sketch" | "countsketch" | "hashing" => Ok(SketchFamily::CountSketch),
            "srht" => Ok(SketchFamily::Srht),
            other => Err(Error::invalid(format!("unknown sketch family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    /// Column-major `m x n` entries.
    Dense { entries: Vec<f64> },
    /// Row `bucket[i]` and sign `sign[i]` of the single nonzero in column `i`.
    Hash { bucket: Vec<u32>, sign: Vec<f64> },
    /// `A = (1/sqrt(m)) * S H D` with `D` the sign diagonal (length `n`,
    /// padding columns are zero) and `S` selecting the sorted `rows`.
    Srht {
        n_pad: usize,
        signs: Vec<f64>,
        rows: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    family: SketchFamily,
    m: usize,
    n: usize,
    seed: u64,
    state: State,
}

impl SketchOperator {
    pub fn build(family: SketchFamily, m: usize, n: usize, seed: u64) -> Result<Self> {
        Self::build_with_budget(family, m, n, seed, DEFAULT_DENSE_BUDGET)
    }

    pub fn build_with_budget(family: SketchFamily, m: usize, n: usize, seed: u64, dense_budget: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("sketch dimension m must be positive"));
        }
        if m > n {
            return Err(Error::invalid(format!("sketch dimension m={m} exceeds n={n}")));
        }
        let state = match family {
            SketchFamily::Gaussian | SketchFamily::Rademacher => {
                let entries = (m as u64).saturating_mul(n as u64);
                if entries > dense_budget {
                    return Err(Error::SketchBudget {
                        entries,
                        budget: dense_budget,
                    });
                }
                let mut rng = seeded(seed);
                let scale = 1.0 / (m as f64).sqrt();
                let entries: Vec<f64> = if family == SketchFamily::Gaussian {
                    (0..m * n)
                        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                        .collect()
                } else {
                    (0..m * n)
                        .map(|_| if rng.random::<bool>() { scale } else { -scale })
                        .collect()
                };
                State::Dense { entries }
            }
            SketchFamily::CountSketch => {
                let key_bucket = splitmix64(seed ^ 0x6A09_E667_F3BC_C908);
                let key_sign = splitmix64(seed ^ 0xBB67_AE85_84CA_A73B);
                let bucket = (0..n as u64)
                    .map(|i| {
                        let h = splitmix64(key_bucket.wrapping_add(i));
                        ((h as u128 * m as u128) >> 64) as u32
                    })
                    .collect();
                let sign = (0..n as u64)
                    .map(|i| {
                        if splitmix64(key_sign.wrapping_add(i)) >> 63 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect();
                State::Hash { bucket, sign }
            }
            SketchFamily::Srht => {
                let n_pad = n.next_power_of_two();
                let mut rng = seeded(seed);
                let signs = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                let mut rows = rand::seq::index::sample(&mut rng, n_pad, m).into_vec();
                rows.sort_unstable();
                State::Srht { n_pad, signs, rows }
            }
        };
        Ok(Self {
            family,
            m,
            n,
            seed,
            state,
        })
    }

    pub fn family(&self) -> SketchFamily {
        self.family
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Padded transform length for SRHT.
    pub fn n_pad(&self) -> Option<usize> {
        match &self.state {
            State::Srht { n_pad, .. } => Some(*n_pad),
            _ => None,
        }
    }

    /// CountSketch hash and sign tables.
    pub fn hash_tables(&self) -> Option<(&[u32], &[f64])> {
        match &self.state {
            State::Hash { bucket, sign } => Some((bucket, sign)),
            _ => None,
        }
    }

    /// SRHT sign diagonal and sampled rows.
    pub fn srht_parts(&self) -> Option<(&[f64], &[usize])> {
        match &self.state {
            State::Srht { signs, rows, .. } => Some((signs, rows)),
            _ => None,
        }
    }

    /// `A v`
    pub fn apply_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("sketch input", self.n, v.len())?;
        Ok(self.apply_column(Column::Dense(v)))
    }

    /// `A c` for a column of length `n` (dense or sparse).
    pub fn apply_column(&self, col: Column<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        match &self.state {
            State::Dense { entries } => {
                for (i, v) in col.entries() {
                    if v != 0.0 {
                        let a = &entries[i * self.m..(i + 1) * self.m];
                        for (o, &aij) in out.iter_mut().zip(a) {
                            *o += v * aij;
                        }
                    }
                }
            }
            State::Hash { bucket, sign } => {
                for (i, v) in col.entries() {
                    out[bucket[i] as usize] += sign[i] * v;
                }
            }
            State::Srht { n_pad, signs, rows } => {
                let mut buf = vec![0.0; *n_pad];
                for (i, v) in col.entries() {
                    buf[i] = signs[i] * v;
                }
                fwht_inplace(&mut buf).expect("n_pad is a power of two");
                let scale = 1.0 / (self.m as f64).sqrt();
                for (o, &r) in out.iter_mut().zip(rows) {
                    *o = buf[r] * scale;
                }
            }
        }
        out
    }

    /// `A X`, column by column. CountSketch keeps sparse input sparse; all
    /// other combinations produce a dense `m x d` matrix.
    pub fn apply_matrix(&self, x: &DesignMatrix) -> Result<DesignMatrix> {
        check_len("sketch input rows", self.n, x.n())?;
        let (m, d) = (self.m, x.d());
        if let (State::Hash { bucket, sign }, true) = (&self.state, x.is_sparse()) {
            let mut col_ptr = Vec::with_capacity(d + 1);
            let mut row_idx = Vec::new();
            let mut values = Vec::new();
            col_ptr.push(0);
            let mut pairs: Vec<(usize, f64)> = Vec::new();
            for j in 0..d {
                pairs.clear();
                pairs.extend(x.column(j).entries().map(|(i, v)| (bucket[i] as usize, sign[i] * v)));
                pairs.sort_by_key(|p| p.0);
                for &(r, v) in &pairs {
                    if row_idx.len() > col_ptr[j] && *row_idx.last().unwrap() == r {
                        *values.last_mut().unwrap() += v;
                    } else {
                        row_idx.push(r);
                        values.push(v);
                    }
                }
                col_ptr.push(values.len());
            }
            return DesignMatrix::sparse(m, d, col_ptr, row_idx, values);
        }
        let mut data = vec![0.0; m * d];
        data.par_chunks_mut(m).enumerate().for_each(|(j, out)| {
            out.copy_from_slice(&self.apply_column(x.column(j)));
        });
        DesignMatrix::dense(m, d, data)
    }

    /// Explicit `m x n` matrix (column-major), built from the family state
    /// rather than by applying the operator.
    pub fn materialize(&self) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        match &self.state {
            State::Dense { entries } => entries.clone(),
            State::Hash { bucket, sign } => {
                let mut a = vec![0.0; m * n];
                for i in 0..n {
                    a[i * m + bucket[i] as usize] = sign[i];
                }
                a
            }
            State::Srht { signs, rows, .. } => {
                let scale = 1.0 / (m as f64).sqrt();
                let mut a = vec![0.0; m * n];
                for i in 0..n {
                    for (k, &r) in rows.iter().enumerate() {
                        a[i * m + k] = scale * signs[i] * hadamard_entry(r, i);
                    }
                }
                a
            }
        }
    }

    /// Sketches a data set: `(A X, A y)` from one operator instance.
    pub fn compress(&self, x: &DesignMatrix, y: &[f64]) -> Result<CompressedData> {
        Ok(CompressedData {
            x_hat: self.apply_matrix(x)?,
            y_hat: self.apply_vec(y)?,
            family: self.family,
            m: self.m,
            seed: self.seed,
        })
    }
}

/// `(X^, y^) = (A X, A y)` plus the operator that produced them.
#[derive(Debug, Clone)]
pub struct CompressedData {
    pub x_hat: DesignMatrix,
    pub y_hat: Vec<f64>,
    pub family: SketchFamily,
    pub m: usize,
    pub seed: u64,
}

/// Target dimension `ceil(c0 * eps^-2 * ln(n_vectors / delta))` for
/// preserving `n_vectors` norms to relative error `eps` with failure
/// probability `delta`.
pub fn theoretical_m(eps: f64, delta: f64, n_vectors: usize, c0: f64) -> Result<usize> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::invalid(format!("eps={eps} must lie in (0, 1/2]")));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::invalid(format!("delta={delta} must lie in (0, 1/2]")));
    }
    if n_vectors == 0 {
        return Err(Error::invalid("need at least one vector"));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::invalid("c0 must be positive"));
    }
    let m = (c0 * (n_vectors as f64 / delta).ln() / (eps * eps)).ceil();
    Ok((m as usize).max(1))
}
