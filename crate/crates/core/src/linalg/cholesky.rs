use crate::error::{Error, Result};

use super::matrix::{CovarianceMatrix, Matrix, SymmetricMatrix};

/// Lower-triangular `L` with `L·Lᵀ = M` and positive diagonal.
pub fn cholesky(m: &CovarianceMatrix) -> Result<Matrix> {
    cholesky_lower(m.as_symmetric())
}

/// Cholesky on an arbitrary symmetric matrix; fails with
/// `NotPositiveDefinite` at the first non-positive pivot.
pub fn cholesky_lower(m: &SymmetricMatrix) -> Result<Matrix> {
    let n = m.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / djj);
        }
    }
    Ok(l)
}

/// Cholesky with an escalating diagonal jitter ladder `0, 1e-12, ..., 1e-6`
/// (relative to the mean diagonal). Returns the factor and the jitter used.
pub fn cholesky_with_jitter(m: &SymmetricMatrix) -> Result<(Matrix, f64)> {
    let scale = m.trace() / m.dim() as f64;
    let mut last = None;
    for jitter in [0.0, 1e-12, 1e-10, 1e-8, 1e-6] {
        match cholesky_lower(&m.shift_diagonal(jitter * scale)) {
            Ok(l) => return Ok((l, jitter * scale)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("ladder is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(rows: &[Vec<f64>]) -> CovarianceMatrix {
        CovarianceMatrix::new(SymmetricMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn identity_and_diagonal() {
        let l = cholesky(&cov(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(l, Matrix::identity(2));
        let l = cholesky(&cov(&[vec![4.0, 0.0], vec![0.0, 9.0]])).unwrap();
        assert_eq!(l.to_rows(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let l = cholesky(&cov(&[vec![1.0, 0.5], vec![0.5, 1.0]])).unwrap();
        assert_eq!(l.get(0, 0), 1.0);
        assert_eq!(l.get(0, 1), 0.0);
        assert!((l.get(1, 0) - 0.5).abs() < 1e-15);
        assert!((l.get(1, 1) - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_pd_is_rejected() {
        let m = SymmetricMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky_lower(&m),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        assert!(CovarianceMatrix::new(m).is_err());
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        let m = SymmetricMatrix::from_fn(3, |_, _| 1.0);
        let (_, jitter) = cholesky_with_jitter(&m).unwrap();
        assert!(jitter > 0.0);
    }
}
