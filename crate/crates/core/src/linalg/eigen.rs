use crate::error::{Error, Result};

use super::matrix::{Matrix, SymmetricMatrix};

/// Off-diagonal Frobenius norm threshold, relative to the matrix norm.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition with ascending eigenvalues. Column `k` of
/// `vectors` pairs with `values[k]`; each column is signed so that its
/// largest-magnitude entry (first one on ties) is positive.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// Eigenvector of the largest eigenvalue.
    pub fn top_vector(&self) -> Vec<f64> {
        self.vector(self.values.len() - 1)
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        SymmetricMatrix::from_fn(n, |i, j| {
            let (ri, rj) = (v.row(i), v.row(j));
            (0..n).map(|k| ri[k] * fv[k] * rj[k]).sum()
        })
    }
}

/// Cyclic Jacobi eigensolver.
pub fn eigh(m: &SymmetricMatrix) -> Result<Eigen> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("eigh: non-finite entries".into()));
    }
    let n = m.dim();
    let mut a = m.to_matrix();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    let threshold = JACOBI_TOL * scale.max(f64::MIN_POSITIVE);

    let off_norm = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.get(i, j) * a.get(i, j);
                }
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if converged || off_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        let nkp = akp - s * (akq + tau * akp);
                        let nkq = akq + s * (akp - tau * akq);
                        a.set(k, p, nkp);
                        a.set(p, k, nkp);
                        a.set(k, q, nkq);
                        a.set(q, k, nkq);
                    }
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp - s * (vkq + tau * vkp));
                    v.set(k, q, vkq + s * (vkp - tau * vkq));
                }
            }
        }
    }
    if !converged && off_norm(&a) > threshold {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let mut pivot = 0;
        for (k, x) in col.iter().enumerate() {
            if x.abs() > col[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (k, x) in col.iter().enumerate() {
            vectors.set(k, dst, sign * x);
        }
    }
    Ok(Eigen { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    Ok(eigh(m)?.values)
}

/// Spectral matrix function `V f(Λ) Vᵀ`.
pub fn matrix_function(m: &SymmetricMatrix, f: impl Fn(f64) -> f64) -> Result<SymmetricMatrix> {
    Ok(eigh(m)?.reconstruct_with(f))
}
