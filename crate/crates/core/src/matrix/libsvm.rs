//! libsvm / svmlight text format: `<label> <idx>:<val> ...` with 1-based,
//! strictly increasing feature indices. Blank lines and `#` comments are
//! skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{fmt_f64, DesignMatrix, Storage, TargetVector};
use crate::error::{Error, Result};

/// Parses a libsvm stream into a sparse matrix and its labels.
///
/// Largest feature index accepted. The column pointer array is allocated
/// up front, so an absurd index in a corrupt file would otherwise exhaust memory.
pub const MAX_FEATURES: usize = 1 << 26;

/// `d` defaults to the largest index seen; `d_override` fixes it so train
/// and test files agree (an index beyond the override is an error).
pub fn parse_libsvm<R: BufRead>(reader: R, d_override: Option<usize>) -> Result<(DesignMatrix, TargetVector)> {
    if d_override.is_some_and(|d| d > MAX_FEATURES) {
        return Err(Error::invalid(format!("dimension exceeds the limit {MAX_FEATURES}")));
    }
    let mut labels = Vec::new();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_idx = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(k) => &line[..k],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let label = parse_finite(label, lineno, "label")?;
        let row = labels.len();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected <idx>:<val>, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(Error::parse(lineno, "feature indices are 1-based"));
            }
            if idx > MAX_FEATURES {
                return Err(Error::parse(
                    lineno,
                    format!("feature index {idx} exceeds the limit {MAX_FEATURES}"),
                ));
            }
            if idx <= prev {
                return Err(Error::parse(
                    lineno,
                    format!("feature index {idx} does not increase (previous {prev})"),
                ));
            }
            if let Some(d) = d_override {
                if idx > d {
                    return Err(Error::parse(
                        lineno,
                        format!("feature index {idx} exceeds dimension {d}"),
                    ));
                }
            }
            let val = parse_finite(val, lineno, "feature value")?;
            triplets.push((row, idx - 1, val));
            prev = idx;
            max_idx = max_idx.max(idx);
        }
        labels.push(label);
    }

    if labels.is_empty() {
        return Err(Error::NoInstances);
    }
    let n = labels.len();
    let d = d_override.unwrap_or(max_idx).max(1);

    // Rows arrive in order with increasing columns, so a counting pass
    // produces CSC directly without sorting.
    let mut col_ptr = vec![0usize; d + 1];
    for &(_, j, _) in &triplets {
        col_ptr[j + 1] += 1;
    }
    for j in 0..d {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut next = col_ptr.clone();
    let mut row_idx = vec![0usize; triplets.len()];
    let mut values = vec![0.0; triplets.len()];
    for (i, j, v) in triplets {
        let k = next[j];
        row_idx[k] = i;
        values[k] = v;
        next[j] += 1;
    }
    let x = DesignMatrix::sparse(n, d, col_ptr, row_idx, values)?;
    Ok((x, TargetVector::new(labels)?))
}

pub fn read_libsvm(path: impl AsRef<Path>, d_override: Option<usize>) -> Result<(DesignMatrix, TargetVector)> {
    parse_libsvm(BufReader::new(File::open(path)?), d_override)
}

/// Writes `(x, y)` in libsvm format. Sparse matrices emit every stored entry;
/// dense matrices skip zeros.
pub fn write_libsvm<W: Write>(mut out: W, x: &DesignMatrix, y: &[f64]) -> Result<()> {
    super::check_len("label count", x.n(), y.len())?;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); x.n()];
    let sparse = matches!(x.storage(), Storage::Sparse { .. });
    for j in 0..x.d() {
        for (i, v) in x.column(j).entries() {
            if sparse || v != 0.0 {
                rows[i].push((j, v));
            }
        }
    }
    let mut line = String::new();
    for (label, row) in y.iter().zip(&rows) {
        line.clear();
        line.push_str(&fmt_f64(*label));
        for &(j, v) in row {
            line.push(' ');
            line.push_str(&(j + 1).to_string());
            line.push(':');
            line.push_str(&fmt_f64(v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn parse_finite(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {what} {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what} {tok:?}")));
    }
    Ok(v)
}
