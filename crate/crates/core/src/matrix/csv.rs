//! Dense CSV: one instance per row, last column is the target. A first line
//! with any non-numeric field is treated as a header.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{fmt_f64, DesignMatrix, TargetVector};
use crate::error::{Error, Result};

pub fn parse_csv<R: BufRead>(reader: R) -> Result<(DesignMatrix, TargetVector)> {
    let mut width: Option<usize> = None;
    let mut rows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if width.is_none() && y.is_empty() && lineno == 1 => {
                width = Some(fields.len());
                continue;
            }
            Err(_) => return Err(Error::parse(lineno, "non-numeric field")),
        };
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse(lineno, format!("non-finite value in column {}", k + 1)));
        }
        let w = *width.get_or_insert(values.len());
        if values.len() != w {
            return Err(Error::parse(
                lineno,
                format!("expected {w} fields, found {}", values.len()),
            ));
        }
        if w < 2 {
            return Err(Error::parse(lineno, "need at least one feature and a target"));
        }
        rows.extend_from_slice(&values[..w - 1]);
        y.push(values[w - 1]);
    }
    if y.is_empty() {
        return Err(Error::NoInstances);
    }
    let d = width.unwrap() - 1;
    let x = DesignMatrix::from_rows(y.len(), d, &rows)?;
    Ok((x, TargetVector::new(y)?))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<(DesignMatrix, TargetVector)> {
    parse_csv(BufReader::new(File::open(path)?))
}

pub fn write_csv<W: Write>(mut out: W, x: &DesignMatrix, y: &[f64]) -> Result<()> {
    super::check_len("target length", x.n(), y.len())?;
    let mut line = String::new();
    for (i, yi) in y.iter().enumerate() {
        line.clear();
        for j in 0..x.d() {
            line.push_str(&fmt_f64(x.get(i, j)));
            line.push(',');
        }
        line.push_str(&fmt_f64(*yi));
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}
