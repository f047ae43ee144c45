//! Affine-invariant geometry on SPD matrices and five notions of mean for a
//! set of correlation matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, nearest_correlation, CorrelationMatrix, CovarianceMatrix, Matrix, SymmetricMatrix};

/// Matrices whose smallest eigenvalue is below this are shifted by the same amount.
pub const JITTER: f64 = 1e-10;
pub const KARCHER_TOL: f64 = 1e-10;
pub const KARCHER_MAX_ITER: usize = 1000;
const PG_MAX_ITER: usize = 2000;
const PG_TOL: f64 = 1e-9;
const GRID_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPoint {
    pub t: f64,
    pub matrix: CovarianceMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeanMethod {
    #[serde(rename = "m1")]
    M1Euclidean,
    #[serde(rename = "m2")]
    M2RiemannianBarycenter,
    #[serde(rename = "m3")]
    M3NormalizedBarycenter,
    #[serde(rename = "m4")]
    M4ConstrainedFrechet,
    #[serde(rename = "m5")]
    M5RiemannianProjection,
}

impl MeanMethod {
    pub const ALL: [MeanMethod; 5] = [
        MeanMethod::M1Euclidean,
        MeanMethod::M2RiemannianBarycenter,
        MeanMethod::M3NormalizedBarycenter,
        MeanMethod::M4ConstrainedFrechet,
        MeanMethod::M5RiemannianProjection,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MeanMethod::M1Euclidean => "m1",
            MeanMethod::M2RiemannianBarycenter => "m2",
            MeanMethod::M3NormalizedBarycenter => "m3",
            MeanMethod::M4ConstrainedFrechet => "m4",
            MeanMethod::M5RiemannianProjection => "m5",
        }
    }
}

impl fmt::Display for MeanMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MeanMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MeanMethod::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown mean method '{s}' (expected m1..m5)")))
    }
}

/// A mean together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub method: MeanMethod,
    pub matrix: SymmetricMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the constrained optimizer stalled before its gradient test.
    pub best_effort: bool,
    pub gradient_norm: f64,
    pub objective: f64,
    pub tolerance: f64,
    /// Number of inputs shifted by [`JITTER`] and the shift applied.
    pub jittered: usize,
    pub jitter: f64,
}

struct Roots {
    sqrt: SymmetricMatrix,
    inv_sqrt: SymmetricMatrix,
}

fn roots(a: &SymmetricMatrix) -> Result<Roots> {
    let e = eigh(a)?;
    if let Some((k, &v)) = e.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NotPositiveDefinite { pivot: k, value: v });
    }
    Ok(Roots {
        sqrt: e.reconstruct_with(f64::sqrt),
        inv_sqrt: e.reconstruct_with(|l| 1.0 / l.sqrt()),
    })
}

fn whiten(inv_sqrt: &SymmetricMatrix, b: &SymmetricMatrix) -> SymmetricMatrix {
    b.congruence(&inv_sqrt.to_matrix())
}

fn log_spectrum_norm2(w: &SymmetricMatrix) -> Result<f64> {
    let e = eigh(w)?;
    if let Some((k, &v)) = e.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NotPositiveDefinite { pivot: k, value: v });
    }
    Ok(e.values.iter().map(|l| l.ln().powi(2)).sum())
}

fn check_dims(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `‖log(A^{-1/2} B A^{-1/2})‖_F`.
pub fn airm_distance(a: &CovarianceMatrix, b: &CovarianceMatrix) -> Result<f64> {
    airm_distance_sym(a.as_symmetric(), b.as_symmetric())
}

fn airm_distance_sym(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    check_dims(a, b)?;
    let r = roots(a)?;
    if a == b {
        return Ok(0.0);
    }
    Ok(log_spectrum_norm2(&whiten(&r.inv_sqrt, b))?.sqrt())
}

/// Point at parameter `t` on the affine-invariant geodesic from `a` to `b`.
pub fn geodesic(a: &CovarianceMatrix, b: &CovarianceMatrix, t: f64) -> Result<GeodesicPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("geodesic parameter {t} outside [0, 1]")));
    }
    check_dims(a.as_symmetric(), b.as_symmetric())?;
    if t == 0.0 {
        return Ok(GeodesicPoint { t, matrix: a.clone() });
    }
    if t == 1.0 {
        return Ok(GeodesicPoint { t, matrix: b.clone() });
    }
    let r = roots(a.as_symmetric())?;
    let w = whiten(&r.inv_sqrt, b.as_symmetric());
    let wt = eigh(&w)?.reconstruct_with(|l| l.max(f64::MIN_POSITIVE).powf(t));
    let g = wt.congruence(&r.sqrt.to_matrix());
    Ok(GeodesicPoint {
        t,
        matrix: CovarianceMatrix::new(g)?,
    })
}

fn jitter_inputs(set: &[CorrelationMatrix]) -> Result<(Vec<SymmetricMatrix>, usize)> {
    let mut count = 0;
    let mut out = Vec::with_capacity(set.len());
    for c in set {
        let min = eigh(c.as_symmetric())?.values[0];
        if min < JITTER {
            count += 1;
            out.push(c.as_symmetric().shift_diagonal(JITTER));
        } else {
            out.push(c.as_symmetric().clone());
        }
    }
    Ok((out, count))
}

fn frechet_objective(c: &SymmetricMatrix, set: &[SymmetricMatrix]) -> Result<f64> {
    let r = roots(c)?;
    let mut f = 0.0;
    for x in set {
        f += log_spectrum_norm2(&whiten(&r.inv_sqrt, x))?;
    }
    Ok(f)
}

/// Gradient tolerance actually attainable for `set`: [`KARCHER_TOL`], or
/// machine epsilon times the worst condition number when that is larger.
pub fn karcher_tolerance(set: &[SymmetricMatrix]) -> Result<f64> {
    let mut worst: f64 = 1.0;
    for s in set {
        let v = eigh(s)?.values;
        worst = worst.max(v[v.len() - 1] / v[0]);
    }
    Ok(KARCHER_TOL.max(f64::EPSILON * worst))
}

/// Karcher mean of SPD matrices: returns the mean, iteration count and the
/// final Riemannian gradient norm.
pub fn karcher_mean(set: &[SymmetricMatrix]) -> Result<(SymmetricMatrix, usize, f64)> {
    let tol = karcher_tolerance(set)?;
    let n = set.len() as f64;
    let dim = set[0].dim();
    let mut x = set
        .iter()
        .skip(1)
        .fold(set[0].clone(), |acc, s| acc.add(s))
        .scale(1.0 / n);
    let mut objective = frechet_objective(&x, set)?;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..KARCHER_MAX_ITER {
        let r = roots(&x)?;
        let mut tangent = SymmetricMatrix::from_fn(dim, |_, _| 0.0);
        for s in set {
            let w = whiten(&r.inv_sqrt, s);
            tangent = tangent.add(&eigh(&w)?.reconstruct_with(f64::ln));
        }
        tangent = tangent.scale(1.0 / n);
        grad_norm = tangent.frobenius_norm();
        if grad_norm <= tol {
            return Ok((x, iter, grad_norm));
        }
        let te = eigh(&tangent)?;
        let mut step = 1.0;
        loop {
            let candidate = te.reconstruct_with(|l| (step * l).exp()).congruence(&r.sqrt.to_matrix());
            let f = frechet_objective(&candidate, set);
            match f {
                Ok(f) if f <= objective || step < 1e-12 => {
                    x = candidate;
                    objective = f;
                    break;
                }
                _ if step < 1e-12 => {
                    return Err(Error::NumericalFailure("Karcher step lost positive definiteness".into()));
                }
                _ => step *= 0.5,
            }
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: KARCHER_MAX_ITER,
        residual: grad_norm,
        last: Box::new(x),
    })
}

fn normalize_diagonal(s: &SymmetricMatrix) -> SymmetricMatrix {
    let d: Vec<f64> = s.diag().iter().map(|v| 1.0 / v.sqrt()).collect();
    SymmetricMatrix::from_fn(s.dim(), |i, j| {
        if i == j {
            1.0
        } else {
            (s.get(i, j) * d[i] * d[j]).clamp(-1.0, 1.0)
        }
    })
}

/// Euclidean gradient of `Σ d²(C, X)` with respect to the entries of `C`.
fn frechet_gradient(c: &SymmetricMatrix, set: &[SymmetricMatrix]) -> Result<SymmetricMatrix> {
    let dim = c.dim();
    let mut g = SymmetricMatrix::from_fn(dim, |_, _| 0.0);
    for x in set {
        let r = roots(x)?;
        let w = whiten(&r.inv_sqrt, c);
        let inner = eigh(&w)?.reconstruct_with(|l| 2.0 * l.ln() / l);
        g = g.add(&inner.congruence(&r.inv_sqrt.to_matrix()));
    }
    Ok(g)
}

fn off_diagonal_norm(g: &SymmetricMatrix) -> f64 {
    // each off-diagonal parameter moves two entries
    let mut s = 0.0;
    for i in 0..g.dim() {
        for j in 0..i {
            s += (2.0 * g.get(i, j)).powi(2);
        }
    }
    s.sqrt()
}

struct Constrained {
    matrix: SymmetricMatrix,
    objective: f64,
    iterations: usize,
    converged: bool,
    best_effort: bool,
    gradient_norm: f64,
}

fn objective_or_inf(c: &SymmetricMatrix, set: &[SymmetricMatrix]) -> f64 {
    frechet_objective(c, set).unwrap_or(f64::INFINITY)
}

fn two_by_two(rho: f64) -> SymmetricMatrix {
    SymmetricMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { rho })
}

/// Exact one-dimensional search over the single correlation of a 2×2 matrix.
fn constrained_dim2(set: &[SymmetricMatrix], start: &SymmetricMatrix) -> Result<Constrained> {
    let f = |rho: f64| objective_or_inf(&two_by_two(rho), set);
    let lo_lim = -1.0 + 1e-12;
    let hi_lim = 1.0 - 1e-12;
    let h = 2.0 / GRID_POINTS as f64;
    let mut best_k = 0;
    let mut best_f = f64::INFINITY;
    for k in 0..GRID_POINTS {
        let v = f(-1.0 + (k as f64 + 0.5) * h);
        if v < best_f {
            best_f = v;
            best_k = k;
        }
    }
    let centre = -1.0 + (best_k as f64 + 0.5) * h;
    let (mut a, mut b) = ((centre - h).max(lo_lim), (centre + h).min(hi_lim));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > 1e-13 && iterations < 200 {
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut rho = 0.5 * (a + b);
    let mut objective = f(rho);
    // the objective is flat to round-off within ~1e-8 of the minimum, so
    // finish on the sign of the analytic derivative
    let slope = |r: f64| frechet_gradient(&two_by_two(r), set).map(|g| g.get(1, 0));
    let (mut lo, mut hi) = ((rho - 1e-6).max(lo_lim), (rho + 1e-6).min(hi_lim));
    if slope(lo)? < 0.0 && slope(hi)? > 0.0 {
        for _ in 0..64 {
            let m = 0.5 * (lo + hi);
            if slope(m)? < 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let polished = 0.5 * (lo + hi);
        let fp = f(polished);
        if fp <= objective + 1e-13 {
            rho = polished;
            objective = fp;
        }
    }
    let start_rho = start.get(1, 0);
    let start_f = f(start_rho);
    if start_f < objective {
        rho = start_rho;
        objective = start_f;
    }
    let matrix = two_by_two(rho);
    let gradient_norm = off_diagonal_norm(&frechet_gradient(&matrix, set)?);
    Ok(Constrained {
        matrix,
        objective,
        iterations: iterations + GRID_POINTS,
        converged: true,
        best_effort: false,
        gradient_norm,
    })
}

/// Projected gradient on the off-diagonal entries, repaired onto the
/// elliptope after each step, with backtracking.
fn constrained_general(set: &[SymmetricMatrix], start: &SymmetricMatrix) -> Result<Constrained> {
    let dim = start.dim();
    let mut c = start.clone();
    let mut objective = objective_or_inf(&c, set);
    if !objective.is_finite() {
        c = c.shift_diagonal(JITTER);
        c = normalize_diagonal(&c);
        objective = objective_or_inf(&c, set);
    }
    let mut step = 0.1;
    let mut gradient_norm = f64::INFINITY;
    for iter in 0..PG_MAX_ITER {
        let g = frechet_gradient(&c, set)?;
        gradient_norm = off_diagonal_norm(&g);
        if gradient_norm <= PG_TOL * (1.0 + objective) {
            return Ok(Constrained {
                matrix: c,
                objective,
                iterations: iter,
                converged: true,
                best_effort: false,
                gradient_norm,
            });
        }
        let mut accepted = false;
        while step > 1e-16 {
            let moved = SymmetricMatrix::from_fn(dim, |i, j| {
                if i == j {
                    1.0
                } else {
                    c.get(i, j) - step * 2.0 * g.get(i, j)
                }
            });
            let repaired = match nearest_correlation(&moved, 1e-12, 500) {
                Ok(m) => m.into_inner(),
                Err(_) => {
                    step *= 0.5;
                    continue;
                }
            };
            let f = objective_or_inf(&repaired, set);
            if f < objective {
                c = repaired;
                objective = f;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(Constrained {
                matrix: c,
                objective,
                iterations: iter,
                converged: false,
                best_effort: true,
                gradient_norm,
            });
        }
    }
    Ok(Constrained {
        matrix: c,
        objective,
        iterations: PG_MAX_ITER,
        converged: false,
        best_effort: true,
        gradient_norm,
    })
}

fn constrained_minimizer(set: &[SymmetricMatrix], start: &SymmetricMatrix) -> Result<Constrained> {
    if start.dim() == 2 {
        constrained_dim2(set, start)
    } else {
        constrained_general(set, start)
    }
}

/// Sum of squared affine-invariant distances from `c` to every member of `set`.
pub fn frechet_cost(c: &SymmetricMatrix, set: &[CorrelationMatrix]) -> Result<f64> {
    let (inputs, _) = jitter_inputs(set)?;
    frechet_objective(c, &inputs)
}

pub fn mean(method: MeanMethod, set: &[CorrelationMatrix]) -> Result<MeanResult> {
    let first = set
        .first()
        .ok_or_else(|| Error::InvalidInput("mean of an empty set".into()))?;
    let dim = first.dim();
    if let Some(bad) = set.iter().find(|c| c.dim() != dim) {
        return Err(Error::InvalidInput(format!(
            "mixed dimensions {} and {}",
            dim,
            bad.dim()
        )));
    }
    let mut result = MeanResult {
        method,
        matrix: first.as_symmetric().clone(),
        iterations: 0,
        converged: true,
        best_effort: false,
        gradient_norm: 0.0,
        objective: f64::NAN,
        tolerance: 0.0,
        jittered: 0,
        jitter: 0.0,
    };
    if method == MeanMethod::M1Euclidean {
        let sum = set
            .iter()
            .skip(1)
            .fold(first.as_symmetric().clone(), |acc, c| acc.add(c.as_symmetric()));
        result.matrix = sum.scale(1.0 / set.len() as f64);
        return Ok(result);
    }

    let (inputs, jittered) = jitter_inputs(set)?;
    result.jittered = jittered;
    result.jitter = if jittered > 0 { JITTER } else { 0.0 };
    let (sigma, k_iter, k_grad) = karcher_mean(&inputs)?;
    result.iterations = k_iter;
    result.gradient_norm = k_grad;
    result.tolerance = karcher_tolerance(&inputs)?;
    match method {
        MeanMethod::M1Euclidean => unreachable!(),
        MeanMethod::M2RiemannianBarycenter => {
            result.objective = frechet_objective(&sigma, &inputs)?;
            result.matrix = sigma;
        }
        MeanMethod::M3NormalizedBarycenter => {
            result.matrix = normalize_diagonal(&sigma);
            result.objective = objective_or_inf(&result.matrix, &inputs);
        }
        MeanMethod::M4ConstrainedFrechet | MeanMethod::M5RiemannianProjection => {
            let start = normalize_diagonal(&sigma);
            let target = if method == MeanMethod::M4ConstrainedFrechet {
                inputs
            } else {
                vec![sigma]
            };
            let opt = constrained_minimizer(&target, &start)?;
            result.matrix = opt.matrix;
            result.objective = opt.objective;
            result.iterations += opt.iterations;
            result.converged = opt.converged;
            result.best_effort = opt.best_effort;
            result.gradient_norm = opt.gradient_norm;
            result.tolerance = PG_TOL;
        }
    }
    Ok(result)
}

/// `A^{1/2}` and `A^{-1/2}` for callers that need both.
pub fn sqrt_pair(a: &CovarianceMatrix) -> Result<(Matrix, Matrix)> {
    let r = roots(a.as_symmetric())?;
    Ok((r.sqrt.to_matrix(), r.inv_sqrt.to_matrix()))
}
