//! Matrix text format: a `<rows> <cols>` header line followed by one
//! whitespace-separated row per line. Writers use 17 significant digits so
//! values survive a round trip bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// `x` with 17 significant digits in scientific notation.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_matrix(a: &Matrix) -> String {
    let mut out = format!("{} {}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = a.row(i).iter().map(|&v| format_f64(v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<Matrix> {
    let err = |msg: String| Error::Parse {
        origin: origin.to_string(),
        msg,
    };
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| err("empty input".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(format!("bad header {header:?}: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(err(format!("header must be `<rows> <cols>`, got {header:?}")));
    };
    let mut entries = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        if i >= rows {
            return Err(err(format!("more than {rows} data rows")));
        }
        let before = entries.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|e| err(format!("row {}: {tok:?}: {e}", i + 1)))?;
            if !v.is_finite() {
                return Err(err(format!("row {}: non-finite entry {tok:?}", i + 1)));
            }
            entries.push(v);
        }
        if entries.len() - before != cols {
            return Err(err(format!(
                "row {} has {} entries, expected {cols}",
                i + 1,
                entries.len() - before
            )));
        }
    }
    if entries.len() != rows * cols {
        return Err(err(format!("expected {rows} data rows")));
    }
    Ok(Matrix::from_row_slice(rows, cols, &entries))
}

/// Parse a vector stored as a single column or a single row matrix.
pub fn parse_vector(text: &str, origin: &str) -> Result<Vector> {
    let m = parse_matrix(text, origin)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (r, c) => Err(Error::Parse {
            origin: origin.to_string(),
            msg: format!("expected a vector, got a {r}x{c} matrix"),
        }),
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector(&text, &path.display().to_string())
}

pub fn write_matrix(path: impl AsRef<Path>, a: &Matrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_matrix(a)).map_err(|e| Error::io(path, e))
}
