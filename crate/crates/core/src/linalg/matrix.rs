use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major general matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Square matrix with exactly symmetric storage.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymmetricMatrix {}x{} [", self.n, self.n)?;
        for r in 0..self.n {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl SymmetricMatrix {
    /// Builds from the lower triangle of `f(i, j)` (`i >= j`), mirrored.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    /// Rejects non-square, too-small or asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(&Matrix::from_rows(rows)?)
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, not square",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        if n < 2 {
            return Err(Error::InvalidInput(format!("dimension {n} < 2")));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (m.get(i, j), m.get(j, i));
                if a != b && !(a.is_nan() && b.is_nan()) {
                    return Err(Error::InvalidInput(format!(
                        "asymmetric entry ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            data: m.as_slice().to_vec(),
        })
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() || m.rows() < 2 {
            return Err(Error::InvalidInput("symmetrize needs a square matrix of dim >= 2".into()));
        }
        Ok(Self::from_fn(m.rows(), |i, j| 0.5 * (m.get(i, j) + m.get(j, i))))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.n, self.n, self.data.clone()).expect("square")
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &SymmetricMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, s: f64) -> SymmetricMatrix {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + shift * I`.
    pub fn shift_diagonal(&self, shift: f64) -> SymmetricMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i] += shift;
        }
        out
    }

    /// `P · self · Pᵀ`, symmetrized to remove round-off asymmetry.
    pub fn congruence(&self, p: &Matrix) -> SymmetricMatrix {
        let m = p.matmul(&self.to_matrix()).matmul(&p.transpose());
        SymmetricMatrix::symmetrize(&m).expect("square")
    }

    pub fn matmul(&self, other: &SymmetricMatrix) -> Matrix {
        self.to_matrix().matmul(&other.to_matrix())
    }

    /// Strict lower triangle, row by row: `(1,0), (2,0), (2,1), ...`.
    pub fn lower_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 1..self.n {
            out.extend_from_slice(&self.data[i * self.n..i * self.n + i]);
        }
        out
    }

    /// Inverse of [`lower_triangle`](Self::lower_triangle), with `diag` on the diagonal.
    pub fn from_lower_triangle(n: usize, tri: &[f64], diag: f64) -> Result<Self> {
        if n < 2 || tri.len() != n * (n - 1) / 2 {
            return Err(Error::InvalidInput(format!(
                "triangle of length {} does not fit dimension {n}",
                tri.len()
            )));
        }
        let mut m = Self::identity(n).scale(diag);
        let mut k = 0;
        for i in 1..n {
            for j in 0..i {
                m.set(i, j, tri[k]);
                k += 1;
            }
        }
        Ok(m)
    }

    /// Simultaneous row/column permutation: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permute(&self, perm: &[usize]) -> SymmetricMatrix {
        assert_eq!(perm.len(), self.n);
        Self::from_fn(self.n, |i, j| self.get(perm[i], perm[j]))
    }

    /// Row-major little-endian bytes of all entries.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Element of the correlation elliptope: symmetric, unit diagonal, PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrelationMatrix(SymmetricMatrix);

impl CorrelationMatrix {
    /// Validates elliptope membership with PSD tolerance `tol`.
    pub fn new(s: SymmetricMatrix, tol: f64) -> Result<Self> {
        let report = super::validate(&s, tol)?;
        if !report.is_valid {
            return Err(Error::InvalidInput(format!(
                "not a correlation matrix: {:?} (diag dev {:e}, max |offdiag| {}, min eigenvalue {:e})",
                report.failures, report.diag_max_dev, report.offdiag_max_abs, report.min_eigenvalue
            )));
        }
        Ok(Self(s))
    }

    /// Wraps a matrix that is a correlation matrix by construction. The
    /// diagonal is reset to exactly one.
    pub(crate) fn from_constructed(mut s: SymmetricMatrix) -> Self {
        for i in 0..s.dim() {
            s.data[i * s.n + i] = 1.0;
        }
        Self(s)
    }

    pub fn identity(n: usize) -> Self {
        Self(SymmetricMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.0
    }

    pub fn into_inner(self) -> SymmetricMatrix {
        self.0
    }

    /// Strict-upper off-diagonal entries `(i < j)` in row order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let v = self.off_diagonal();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn permute(&self, perm: &[usize]) -> CorrelationMatrix {
        Self(self.0.permute(perm))
    }
}

impl AsRef<SymmetricMatrix> for CorrelationMatrix {
    fn as_ref(&self) -> &SymmetricMatrix {
        &self.0
    }
}

/// Symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovarianceMatrix(SymmetricMatrix);

impl CovarianceMatrix {
    /// Accepts `s` only if a Cholesky factorization succeeds.
    pub fn new(s: SymmetricMatrix) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::InvalidInput("non-finite entries".into()));
        }
        super::cholesky_lower(&s)?;
        Ok(Self(s))
    }

    pub fn from_correlation(c: &CorrelationMatrix, vols: &[f64]) -> Result<Self> {
        if vols.len() != c.dim() || vols.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("vols must be positive, one per asset".into()));
        }
        Self::new(SymmetricMatrix::from_fn(c.dim(), |i, j| {
            vols[i] * vols[j] * c.get(i, j)
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.0
    }

    pub fn into_inner(self) -> SymmetricMatrix {
        self.0
    }

    pub fn variances(&self) -> Vec<f64> {
        self.0.diag()
    }

    /// Correlation implied by this covariance.
    pub fn correlation(&self) -> CorrelationMatrix {
        let sd: Vec<f64> = self.0.diag().iter().map(|v| v.sqrt()).collect();
        CorrelationMatrix::from_constructed(SymmetricMatrix::from_fn(self.dim(), |i, j| {
            (self.get(i, j) / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }))
    }
}

impl AsRef<SymmetricMatrix> for CovarianceMatrix {
    fn as_ref(&self) -> &SymmetricMatrix {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_rejects_asymmetry_and_small_dims() {
        assert!(SymmetricMatrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(SymmetricMatrix::from_rows(&[vec![1.0]]).is_err());
        assert!(SymmetricMatrix::from_rows(&[vec![1.0, 0.2, 0.0], vec![0.2, 1.0, 0.0]]).is_err());
    }

    #[test]
    fn lower_triangle_round_trip() {
        let s = SymmetricMatrix::from_fn(4, |i, j| if i == j { 1.0 } else { (i * 10 + j) as f64 });
        let tri = s.lower_triangle();
        assert_eq!(tri, vec![10.0, 20.0, 21.0, 30.0, 31.0, 32.0]);
        assert_eq!(SymmetricMatrix::from_lower_triangle(4, &tri, 1.0).unwrap(), s);
    }

    #[test]
    fn covariance_correlation_round_trip() {
        let c = CorrelationMatrix::new(
            SymmetricMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap(),
            1e-8,
        )
        .unwrap();
        let cov = CovarianceMatrix::from_correlation(&c, &[2.0, 0.5]).unwrap();
        assert!((cov.get(0, 1) - 0.3).abs() < 1e-15);
        assert!(cov.correlation().as_symmetric().frobenius_distance(c.as_symmetric()) < 1e-15);
    }
}
