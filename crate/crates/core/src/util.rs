//! Small numeric and formatting helpers shared across modules.

use crate::error::{Error, Result};
use std::path::Path;

/// Pairwise (cascade) summation. Deterministic for a fixed input order and
/// much better conditioned than left-to-right accumulation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Standard error of the mean (sample standard deviation / sqrt n).
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&sq) / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Render with 17 significant digits; round-trips any f64 exactly.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Euclidean norm of a flat slice.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Plain CSV matrix I/O (corpus files, dictionary checkpoints)
// ---------------------------------------------------------------------------

/// Write a real matrix as bare CSV, one row per line, 17 significant digits.
pub fn write_matrix_csv(path: &Path, m: &ndarray::Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_g17(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a bare CSV matrix; all rows must have equal length.
pub fn read_matrix_csv(path: &Path) -> Result<ndarray::Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}:{}: bad number: {e}", path.display(), ln + 1)))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Config(format!(
                    "{}:{}: expected {} columns, found {}",
                    path.display(),
                    ln + 1,
                    c,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    let cols = cols.ok_or_else(|| Error::Config(format!("{}: empty matrix", path.display())))?;
    let rows = data.len() / cols;
    ndarray::Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
