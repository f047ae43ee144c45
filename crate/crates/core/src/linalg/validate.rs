use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::eigen::eigh;
use super::matrix::{Matrix, SymmetricMatrix};

/// Allowed deviation of a diagonal entry from one.
pub const DIAG_TOL: f64 = 1e-12;
/// Default PSD tolerance on the smallest eigenvalue.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationFailure {
    Diagonal,
    Range,
    #[serde(rename = "PSD")]
    Psd,
    Asymmetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_valid: bool,
    pub diag_max_dev: f64,
    pub offdiag_max_abs: f64,
    pub min_eigenvalue: f64,
    pub failures: Vec<ValidationFailure>,
}

/// Checks every elliptope condition on a symmetric matrix. The PSD test is
/// `min eigenvalue >= -tol`.
pub fn validate(m: &SymmetricMatrix, tol: f64) -> Result<ValidationReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.dim();
    let diag_max_dev = (0..n).map(|i| (m.get(i, i) - 1.0).abs()).fold(0.0, f64::max);
    let mut offdiag_max_abs: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                offdiag_max_abs = offdiag_max_abs.max(m.get(i, j).abs());
            }
        }
    }
    let min_eigenvalue = eigh(m)?.values[0];
    let mut failures = Vec::new();
    if diag_max_dev > DIAG_TOL {
        failures.push(ValidationFailure::Diagonal);
    }
    if offdiag_max_abs > 1.0 + DIAG_TOL {
        failures.push(ValidationFailure::Range);
    }
    if min_eigenvalue < -tol {
        failures.push(ValidationFailure::Psd);
    }
    Ok(ValidationReport {
        is_valid: failures.is_empty(),
        diag_max_dev,
        offdiag_max_abs,
        min_eigenvalue,
        failures,
    })
}

/// Validates an arbitrary dense square matrix, reporting asymmetry in
/// addition to the elliptope conditions (checked on the symmetric part).
pub fn validate_dense(m: &Matrix, tol: f64) -> Result<ValidationReport> {
    let sym = SymmetricMatrix::symmetrize(m)?;
    let mut report = validate(&sym, tol)?;
    let asym = (0..m.rows())
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .any(|(i, j)| m.get(i, j) != m.get(j, i));
    if asym {
        report.failures.push(ValidationFailure::Asymmetry);
        report.is_valid = false;
    }
    Ok(report)
}
