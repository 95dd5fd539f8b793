use super::{DesignMatrix, Storage};
use crate::error::{Error, Result};

/// Column normalization modes. Both scale each column so that its
/// population variance is `1/n`, i.e. the centered column has unit l2 norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeMode {
    /// Subtract the column mean, then scale. Densifies sparse input.
    MeanZeroVarOneOverN,
    /// Scale only; keeps sparsity. The variance is still measured about the mean.
    ScaleOnlyVarOneOverN,
}

/// Per-column statistics from a training matrix, reusable on test data.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mode: NormalizeMode,
    /// Subtracted before scaling (all zero in scale-only mode).
    pub mean: Vec<f64>,
    /// Multiplier; zero for constant columns, which are zeroed.
    pub scale: Vec<f64>,
}

/// Largest `n * d` that mean-centering is allowed to densify.
const MAX_DENSE_ENTRIES: usize = 100_000_000;

pub fn normalize_columns(x: &DesignMatrix, mode: NormalizeMode) -> Result<(DesignMatrix, ColumnStats)> {
    let n = x.n() as f64;
    let mut mean = vec![0.0; x.d()];
    let mut scale = vec![0.0; x.d()];
    for j in 0..x.d() {
        let col = x.column(j);
        let mu = col.entries().map(|(_, v)| v).sum::<f64>() / n;
        // Sum of squared deviations; implicit zeros of a sparse column
        // contribute mu^2 each.
        let mut ss: f64 = col.entries().map(|(_, v)| (v - mu) * (v - mu)).sum();
        ss += (x.n() - col.nnz()) as f64 * mu * mu;
        let s = if ss > 0.0 { 1.0 / ss.sqrt() } else { 0.0 };
        scale[j] = s;
        if mode == NormalizeMode::MeanZeroVarOneOverN {
            mean[j] = mu;
        }
    }
    let stats = ColumnStats { mode, mean, scale };
    let out = stats.apply(x)?;
    Ok((out, stats))
}

impl ColumnStats {
    /// Applies these statistics to `x` (which must have the same `d`).
    pub fn apply(&self, x: &DesignMatrix) -> Result<DesignMatrix> {
        super::check_len("column count", self.scale.len(), x.d())?;
        match (self.mode, x.storage()) {
            (
                NormalizeMode::ScaleOnlyVarOneOverN,
                Storage::Sparse {
                    col_ptr,
                    row_idx,
                    values,
                },
            ) => {
                let mut vals = values.clone();
                for j in 0..x.d() {
                    for v in &mut vals[col_ptr[j]..col_ptr[j + 1]] {
                        *v *= self.scale[j];
                    }
                }
                DesignMatrix::sparse(x.n(), x.d(), col_ptr.clone(), row_idx.clone(), vals)
            }
            _ => {
                if x.is_sparse() && x.n().saturating_mul(x.d()) > MAX_DENSE_ENTRIES {
                    return Err(Error::invalid(
                        "mean-centering would densify a very large sparse matrix; use scale-only mode",
                    ));
                }
                let n = x.n();
                let mut data = x.to_dense_data();
                for j in 0..x.d() {
                    let (mu, s) = (self.mean[j], self.scale[j]);
                    for v in &mut data[j * n..(j + 1) * n] {
                        *v = (*v - mu) * s;
                    }
                }
                DesignMatrix::dense(n, x.d(), data)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn variance(x: &DesignMatrix, j: usize) -> f64 {
        let n = x.n() as f64;
        let vals: Vec<f64> = (0..x.n()).map(|i| x.get(i, j)).collect();
        let mu = vals.iter().sum::<f64>() / n;
        vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n
    }

    #[test]
    fn constant_column_is_zeroed() {
        let x = DesignMatrix::dense(3, 1, vec![5.0; 3]).unwrap();
        let (z, stats) = normalize_columns(&x, NormalizeMode::MeanZeroVarOneOverN).unwrap();
        assert_eq!(stats.scale, vec![0.0]);
        assert!((0..3).all(|i| z.get(i, 0) == 0.0));
    }

    #[test]
    fn two_point_column_gets_variance_half() {
        let x = DesignMatrix::dense(2, 1, vec![1.0, -1.0]).unwrap();
        for mode in [NormalizeMode::MeanZeroVarOneOverN, NormalizeMode::ScaleOnlyVarOneOverN] {
            let (z, _) = normalize_columns(&x, mode).unwrap();
            assert!((variance(&z, 0) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_matrix_is_fixed_point() {
        let mut rng = seeded(5);
        let data: Vec<f64> = (0..40 * 7).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = DesignMatrix::dense(40, 7, data).unwrap();
        let (z, _) = normalize_columns(&x, NormalizeMode::MeanZeroVarOneOverN).unwrap();
        let (z2, _) = normalize_columns(&z, NormalizeMode::MeanZeroVarOneOverN).unwrap();
        for j in 0..7 {
            assert!((variance(&z, j) - 1.0 / 40.0).abs() < 1e-12);
            for i in 0..40 {
                assert!((z.get(i, j) - z2.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_scale_only_matches_dense() {
        let x = DesignMatrix::from_triplets(4, 2, vec![(0, 0, 2.0), (3, 0, -1.0), (2, 1, 7.0)]).unwrap();
        let (zs, s1) = normalize_columns(&x, NormalizeMode::ScaleOnlyVarOneOverN).unwrap();
        let (zd, s2) = normalize_columns(&x.to_dense(), NormalizeMode::ScaleOnlyVarOneOverN).unwrap();
        assert!(zs.is_sparse());
        assert_eq!(s1, s2);
        for j in 0..2 {
            for i in 0..4 {
                assert!((zs.get(i, j) - zd.get(i, j)).abs() < 1e-15);
            }
            assert!((variance(&zs, j) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn train_statistics_apply_to_test() {
        let train = DesignMatrix::dense(2, 1, vec![0.0, 2.0]).unwrap();
        let (_, stats) = normalize_columns(&train, NormalizeMode::MeanZeroVarOneOverN).unwrap();
        let test = DesignMatrix::dense(1, 1, vec![3.0]).unwrap();
        let t = stats.apply(&test).unwrap();
        // mean 1, ||centered|| = sqrt(2)
        assert!((t.get(0, 0) - 2.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(stats.apply(&DesignMatrix::identity(2).unwrap()).is_err());
    }
}
