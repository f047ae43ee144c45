use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};

use super::matrix::Matrix;

/// Parses a headerless CSV matrix: one row per line, decimal reals.
pub fn parse_matrix_csv(reader: impl Read) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let width = *cols.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::ParseError {
                row: r + 1,
                col: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                row: r + 1,
                col: c + 1,
                message: format!("not a number: '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseError { row: r + 1, col: c + 1, message: format!("non-finite value '{cell}'") });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidInput("empty matrix file".into()));
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}

pub fn read_matrix_csv(path: &std::path::Path) -> Result<Matrix> {
    parse_matrix_csv(std::fs::File::open(path)?)
}

/// Shortest round-trip decimal form, so reading back is bit-exact.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}
