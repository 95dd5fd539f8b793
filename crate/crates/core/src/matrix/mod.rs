//! Column-major design matrices and target vectors.
//!
//! Every consumer in this crate walks columns (coordinate updates, column
//! norms, `X^T v` products), so both storages are column-major: dense data is
//! stored column after column and sparse data as compressed sparse columns.

mod csv;
mod libsvm;
mod normalize;

pub use self::csv::{parse_csv, read_csv, write_csv};
pub use libsvm::{parse_libsvm, read_libsvm, write_libsvm, MAX_FEATURES};
pub use normalize::{normalize_columns, ColumnStats, NormalizeMode};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// `n * d` values, column `j` at `data[j * n..(j + 1) * n]`.
    Dense { data: Vec<f64> },
    /// Compressed sparse columns; row indices strictly increase inside a column.
    Sparse {
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    },
}

/// The data matrix `X` (n instances x d features).
///
/// Immutable once built. The maximum column l2 norm `R` is computed at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    d: usize,
    storage: Storage,
    col_norm_bound: f64,
}

/// Borrowed view of one column.
#[derive(Debug, Clone, Copy)]
pub enum Column<'a> {
    Dense(&'a [f64]),
    Sparse { rows: &'a [usize], values: &'a [f64] },
}

impl<'a> Column<'a> {
    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        match *self {
            Column::Dense(c) => dot(c, v),
            Column::Sparse { rows, values } => rows.iter().zip(values).map(|(&i, &x)| x * v[i]).sum(),
        }
    }

    /// `out += alpha * column`
    #[inline]
    pub fn axpy(&self, alpha: f64, out: &mut [f64]) {
        match *self {
            Column::Dense(c) => {
                for (o, &x) in out.iter_mut().zip(c) {
                    *o += alpha * x;
                }
            }
            Column::Sparse { rows, values } => {
                for (&i, &x) in rows.iter().zip(values) {
                    out[i] += alpha * x;
                }
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match *self {
            Column::Dense(c) => dot(c, c),
            Column::Sparse { values, .. } => dot(values, values),
        }
    }

    pub fn nnz(&self) -> usize {
        match *self {
            Column::Dense(c) => c.len(),
            Column::Sparse { rows, .. } => rows.len(),
        }
    }

    /// Stored entries as `(row, value)`.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        match *self {
            Column::Dense(c) => Box::new(c.iter().copied().enumerate()),
            Column::Sparse { rows, values } => Box::new(rows.iter().copied().zip(values.iter().copied())),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl DesignMatrix {
    /// Dense matrix from column-major data.
    pub fn dense(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(n, d)?;
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                what: "dense data length",
                expected: n * d,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self::finish(n, d, Storage::Dense { data }))
    }

    /// Dense matrix from row-major data (one instance per row).
    pub fn from_rows(n: usize, d: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * d {
            return Err(Error::DimensionMismatch {
                what: "row-major data length",
                expected: n * d,
                got: rows.len(),
            });
        }
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                data[j * n + i] = rows[i * d + j];
            }
        }
        Self::dense(n, d, data)
    }

    /// Compressed-sparse-column matrix.
    pub fn sparse(n: usize, d: usize, col_ptr: Vec<usize>, row_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_shape(n, d)?;
        if col_ptr.len() != d + 1 {
            return Err(Error::DimensionMismatch {
                what: "col_ptr length",
                expected: d + 1,
                got: col_ptr.len(),
            });
        }
        if row_idx.len() != values.len() || col_ptr[0] != 0 || col_ptr[d] != values.len() {
            return Err(Error::invalid("inconsistent CSC arrays"));
        }
        for j in 0..d {
            let (lo, hi) = (col_ptr[j], col_ptr[j + 1]);
            if lo > hi {
                return Err(Error::invalid("col_ptr must be non-decreasing"));
            }
            let rows = &row_idx[lo..hi];
            if rows.iter().any(|&r| r >= n) {
                return Err(Error::invalid(format!("row index out of range in column {j}")));
            }
            if rows.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "row indices must strictly increase in column {j}"
                )));
            }
        }
        check_finite(&values)?;
        Ok(Self::finish(
            n,
            d,
            Storage::Sparse {
                col_ptr,
                row_idx,
                values,
            },
        ))
    }

    /// Sparse matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, d: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        check_shape(n, d)?;
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= n || j >= d) {
            return Err(Error::invalid(format!("triplet ({i}, {j}) out of range")));
        }
        triplets.sort_by_key(|&(i, j, _)| (j, i));
        let mut col_ptr = vec![0usize; d + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(i);
            values.push(v);
            col_ptr[j + 1] += 1;
            last = Some((i, j));
        }
        for j in 0..d {
            col_ptr[j + 1] += col_ptr[j];
        }
        Self::sparse(n, d, col_ptr, row_idx, values)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::dense(n, n, data)
    }

    fn finish(n: usize, d: usize, storage: Storage) -> Self {
        let mut m = Self {
            n,
            d,
            storage,
            col_norm_bound: 0.0,
        };
        m.col_norm_bound = (0..d).map(|j| m.column(j).norm_sq()).fold(0.0, f64::max).sqrt();
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense { data } => data.len(),
            Storage::Sparse { values, .. } => values.len(),
        }
    }

    /// `R = max_j ||x_j||_2`, cached at construction.
    pub fn col_norm_bound(&self) -> f64 {
        self.col_norm_bound
    }

    #[inline]
    pub fn column(&self, j: usize) -> Column<'_> {
        match &self.storage {
            Storage::Dense { data } => Column::Dense(&data[j * self.n..(j + 1) * self.n]),
            Storage::Sparse {
                col_ptr,
                row_idx,
                values,
            } => {
                let (lo, hi) = (col_ptr[j], col_ptr[j + 1]);
                Column::Sparse {
                    rows: &row_idx[lo..hi],
                    values: &values[lo..hi],
                }
            }
        }
    }

    pub fn col_norms_sq(&self) -> Vec<f64> {
        (0..self.d).map(|j| self.column(j).norm_sq()).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.column(j) {
            Column::Dense(c) => c[i],
            Column::Sparse { rows, values } => match rows.binary_search(&i) {
                Ok(k) => values[k],
                Err(_) => 0.0,
            },
        }
    }

    /// `X w`
    pub fn matvec(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec input", self.d, w.len())?;
        let mut out = vec![0.0; self.n];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                self.column(j).axpy(wj, &mut out);
            }
        }
        Ok(out)
    }

    /// `X^T v`
    pub fn t_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("t_matvec input", self.n, v.len())?;
        Ok((0..self.d).map(|j| self.column(j).dot(v)).collect())
    }

    /// Column-major dense copy of the data.
    pub fn to_dense_data(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense { data } => data.clone(),
            Storage::Sparse { .. } => {
                let mut data = vec![0.0; self.n * self.d];
                for j in 0..self.d {
                    for (i, v) in self.column(j).entries() {
                        data[j * self.n + i] = v;
                    }
                }
                data
            }
        }
    }

    pub fn to_dense(&self) -> DesignMatrix {
        match &self.storage {
            Storage::Dense { .. } => self.clone(),
            Storage::Sparse { .. } => Self::finish(
                self.n,
                self.d,
                Storage::Dense {
                    data: self.to_dense_data(),
                },
            ),
        }
    }

    /// Sparse copy holding the nonzero entries.
    pub fn to_sparse(&self) -> DesignMatrix {
        let mut col_ptr = Vec::with_capacity(self.d + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..self.d {
            for (i, v) in self.column(j).entries() {
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(values.len());
        }
        Self::finish(
            self.n,
            self.d,
            Storage::Sparse {
                col_ptr,
                row_idx,
                values,
            },
        )
    }

    /// Matrix with the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<DesignMatrix> {
        let mut data = Vec::with_capacity(self.n * cols.len());
        for &j in cols {
            if j >= self.d {
                return Err(Error::invalid(format!("column {j} out of range")));
            }
            let start = data.len();
            data.resize(start + self.n, 0.0);
            for (i, v) in self.column(j).entries() {
                data[start + i] = v;
            }
        }
        Self::dense(self.n, cols.len(), data)
    }

    /// Same matrix with a different column count. Used when a libsvm test file
    /// has to match the training dimension; extra columns are dropped only if
    /// they are empty.
    pub fn with_d(&self, d: usize) -> Result<DesignMatrix> {
        if d == self.d {
            return Ok(self.clone());
        }
        check_shape(self.n, d)?;
        match &self.storage {
            Storage::Sparse {
                col_ptr,
                row_idx,
                values,
            } => {
                if d < self.d && col_ptr[d] != values.len() {
                    return Err(Error::invalid(format!("matrix has nonzeros beyond column {d}")));
                }
                let mut cp: Vec<usize> = col_ptr[..=d.min(self.d)].to_vec();
                let nnz = *cp.last().unwrap();
                cp.resize(d + 1, nnz);
                Self::sparse(self.n, d, cp, row_idx[..nnz].to_vec(), values[..nnz].to_vec())
            }
            Storage::Dense { data } => {
                if d < self.d && data[d * self.n..].iter().any(|&v| v != 0.0) {
                    return Err(Error::invalid(format!("matrix has nonzeros beyond column {d}")));
                }
                let mut data = data.clone();
                data.resize(self.n * d, 0.0);
                Self::dense(self.n, d, data)
            }
        }
    }
}

/// The target vector `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector(Vec<f64>);

impl TargetVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    /// Checks the length against the paired design matrix.
    pub fn paired(values: Vec<f64>, x: &DesignMatrix) -> Result<Self> {
        check_len("target length", x.n(), values.len())?;
        Self::new(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for TargetVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_shape(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::invalid(format!("matrix shape {n}x{d} must be at least 1x1")));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::invalid(format!("non-finite value at position {k}"))),
        None => Ok(()),
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_dense(n: usize, d: usize, seed: u64, density: f64) -> DesignMatrix {
        let mut rng = seeded(seed);
        let data: Vec<f64> = (0..n * d)
            .map(|_| {
                if rng.random::<f64>() < density {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        DesignMatrix::dense(n, d, data).unwrap()
    }

    #[test]
    fn col_norm_bound_identity() {
        assert_eq!(DesignMatrix::identity(2).unwrap().col_norm_bound(), 1.0);
    }

    #[test]
    fn col_norm_bound_345() {
        let x = DesignMatrix::dense(2, 2, vec![3.0, 4.0, 0.0, 1.0]).unwrap();
        assert_eq!(x.col_norm_bound(), 5.0);
    }

    #[test]
    fn col_norm_bound_matches_naive_loop() {
        let x = random_dense(50, 20, 3, 1.0);
        let mut best: f64 = 0.0;
        for j in 0..20 {
            let mut s = 0.0;
            for i in 0..50 {
                s += x.get(i, j) * x.get(i, j);
            }
            best = best.max(s.sqrt());
        }
        assert!((x.col_norm_bound() - best).abs() <= 1e-12 * best);
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(DesignMatrix::dense(0, 1, vec![]).is_err());
        assert!(DesignMatrix::dense(1, 1, vec![f64::NAN]).is_err());
        assert!(DesignMatrix::dense(2, 1, vec![1.0]).is_err());
        // non-increasing rows
        assert!(DesignMatrix::sparse(3, 1, vec![0, 2], vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(TargetVector::paired(vec![1.0], &DesignMatrix::identity(2).unwrap()).is_err());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let x = DesignMatrix::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(x.get(1, 0), 1.5);
        assert_eq!(x.get(0, 1), 2.0);
        assert_eq!(x.get(0, 0), 0.0);
        assert_eq!(x.nnz(), 2);
    }

    #[test]
    fn with_d_pads_and_truncates() {
        let x = DesignMatrix::from_triplets(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let wide = x.with_d(4).unwrap();
        assert_eq!(wide.d(), 4);
        assert_eq!(wide.with_d(1).unwrap().get(0, 0), 1.0);
        assert!(DesignMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)])
            .unwrap()
            .with_d(1)
            .is_err());
    }

    proptest! {
        #[test]
        fn bound_dominates_every_column(seed in 0u64..1000, n in 1usize..12, d in 1usize..12) {
            let x = random_dense(n, d, seed, 0.6);
            for j in 0..d {
                prop_assert!(x.col_norm_bound() >= x.column(j).norm_sq().sqrt());
            }
        }

        #[test]
        fn dense_and_sparse_products_agree(seed in 0u64..1000, n in 1usize..30, d in 1usize..30) {
            let x = random_dense(n, d, seed, 0.3);
            let s = x.to_sparse();
            let mut rng = seeded(seed + 1);
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for (a, b) in x.matvec(&w).unwrap().iter().zip(s.matvec(&w).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            for (a, b) in x.t_matvec(&v).unwrap().iter().zip(s.t_matvec(&v).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            prop_assert!((x.col_norm_bound() - s.col_norm_bound()).abs() <= 1e-12 * (1.0 + x.col_norm_bound()));
        }

        #[test]
        fn fmt_roundtrips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
