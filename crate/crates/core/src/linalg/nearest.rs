use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::eigen::matrix_function;
use super::matrix::{CorrelationMatrix, SymmetricMatrix};
use super::validate::validate;

pub const DEFAULT_MAX_ITER: usize = 200;

/// Iteration record of one projection run. `residuals[k]` is the Frobenius
/// gap between the unit-diagonal iterate and the PSD iterate after step `k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTrace {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub already_valid: bool,
}

/// Projection onto the PSD cone by clipping eigenvalues at zero.
pub fn project_psd(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    matrix_function(s, |l| l.max(0.0))
}

fn project_unit_diagonal(s: &SymmetricMatrix) -> SymmetricMatrix {
    let mut out = s.clone();
    for i in 0..s.dim() {
        out.set(i, i, 1.0);
    }
    out
}

/// Nearest correlation matrix in Frobenius norm (alternating projections
/// with Dykstra's correction on the PSD step).
pub fn nearest_correlation(s: &SymmetricMatrix, tol: f64, max_iter: usize) -> Result<CorrelationMatrix> {
    nearest_correlation_traced(s, tol, max_iter).map(|(c, _)| c)
}

pub fn nearest_correlation_traced(
    s: &SymmetricMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(CorrelationMatrix, ProjectionTrace)> {
    let initial = validate(s, tol)?;
    let mut trace = ProjectionTrace::default();
    if initial.is_valid {
        trace.already_valid = true;
        return Ok((CorrelationMatrix::from_constructed(s.clone()), trace));
    }

    let n = s.dim();
    let mut y = s.clone();
    let mut correction = SymmetricMatrix::from_fn(n, |_, _| 0.0);
    let mut residual = f64::INFINITY;
    for k in 0..max_iter {
        let r = y.sub(&correction);
        let x = project_psd(&r)?;
        correction = x.sub(&r);
        y = project_unit_diagonal(&x);
        residual = y.frobenius_distance(&x);
        trace.residuals.push(residual);
        trace.iterations = k + 1;
        if residual <= tol {
            let mut candidate = y.clone();
            for i in 0..n {
                for j in 0..i {
                    candidate.set(i, j, candidate.get(i, j).clamp(-1.0, 1.0));
                }
            }
            if validate(&candidate, tol)?.is_valid {
                return Ok((CorrelationMatrix::from_constructed(candidate), trace));
            }
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: trace.iterations,
        residual,
        last: Box::new(y),
    })
}
