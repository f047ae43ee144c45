//! Dense symmetric matrix foundation: elliptope validation, Jacobi
//! eigendecomposition, Cholesky and nearest-correlation projection.

mod cholesky;
mod eigen;
mod io;
mod matrix;
mod nearest;
mod validate;

pub use cholesky::{cholesky, cholesky_lower, cholesky_with_jitter};
pub use eigen::{eigenvalues, eigh, matrix_function, Eigen, JACOBI_MAX_SWEEPS, JACOBI_TOL};
pub use io::{matrix_to_csv, parse_matrix_csv, read_matrix_csv};
pub use matrix::{CorrelationMatrix, CovarianceMatrix, Matrix, SymmetricMatrix};
pub use nearest::{
    nearest_correlation, nearest_correlation_traced, project_psd, ProjectionTrace, DEFAULT_MAX_ITER,
};
pub use validate::{validate, validate_dense, ValidationFailure, ValidationReport, DEFAULT_TOL, DIAG_TOL};

/// Pearson correlation matrix of the columns of `data` (rows are observations).
/// The first column with zero variance (relative to its magnitude) is
/// reported by index.
pub fn pearson(data: &Matrix) -> std::result::Result<SymmetricMatrix, usize> {
    let (t, d) = (data.rows(), data.cols());
    let means: Vec<f64> = (0..d)
        .map(|j| (0..t).map(|i| data.get(i, j)).sum::<f64>() / t as f64)
        .collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..t {
        let row = data.row(i);
        for a in 0..d {
            let da = row[a] - means[a];
            for b in 0..=a {
                cov[a * d + b] += da * (row[b] - means[b]);
            }
        }
    }
    for a in 0..d {
        let energy: f64 = (0..t).map(|i| data.get(i, a).powi(2)).sum();
        // relative test: a constant column leaves only round-off variance
        if !(cov[a * d + a] > 1e-24 * energy) {
            return Err(a);
        }
    }
    Ok(SymmetricMatrix::from_fn(d, |a, b| {
        if a == b {
            1.0
        } else {
            (cov[a * d + b] / (cov[a * d + a] * cov[b * d + b]).sqrt()).clamp(-1.0, 1.0)
        }
    }))
}

/// Sample covariance (divisor `T - 1`) of the columns of `data`.
pub fn sample_covariance(data: &Matrix) -> SymmetricMatrix {
    let (t, d) = (data.rows(), data.cols());
    let means: Vec<f64> = (0..d)
        .map(|j| (0..t).map(|i| data.get(i, j)).sum::<f64>() / t as f64)
        .collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..t {
        let row = data.row(i);
        for a in 0..d {
            let da = row[a] - means[a];
            for b in 0..=a {
                cov[a * d + b] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = (t.max(2) - 1) as f64;
    SymmetricMatrix::from_fn(d, |a, b| cov[a * d + b] / denom)
}
