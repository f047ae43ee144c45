//! Random correlation matrices: onion (LKJ), C-vine, prescribed spectrum,
//! one-factor, and the regime-structured surrogate market generator.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, CorrelationMatrix, Matrix, SymmetricMatrix};
use crate::rng::{Rng as SeededRng, Seed};

/// Diagonal entries closer than this to one are considered fixed by the
/// spectrum sampler.
pub const SPECTRUM_DIAG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeLabel {
    Stressed,
    Normal,
    Rally,
}

impl RegimeLabel {
    pub const ALL: [RegimeLabel; 3] = [RegimeLabel::Stressed, RegimeLabel::Normal, RegimeLabel::Rally];

    /// Position in one-hot encodings.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RegimeLabel::Stressed => "stressed",
            RegimeLabel::Normal => "normal",
            RegimeLabel::Rally => "rally",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegimeLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown regime '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeParams {
    pub market_beta_range: (f64, f64),
    pub n_clusters: usize,
    /// Cluster variance relative to the remaining non-market variance
    /// (share = b / (1 + b)).
    pub intra_boost: f64,
    /// Share of the leftover idiosyncratic variance given to random
    /// cross-sectional noise factors.
    pub noise_scale: f64,
    pub hierarchy_depth: usize,
}

impl RegimeParams {
    pub fn defaults(regime: RegimeLabel) -> Self {
        match regime {
            RegimeLabel::Stressed => RegimeParams {
                market_beta_range: (0.6, 0.8),
                n_clusters: 2,
                intra_boost: 0.15,
                noise_scale: 0.3,
                hierarchy_depth: 1,
            },
            RegimeLabel::Normal => RegimeParams {
                market_beta_range: (0.3, 0.5),
                n_clusters: 5,
                intra_boost: 1.0,
                noise_scale: 0.2,
                hierarchy_depth: 2,
            },
            RegimeLabel::Rally => RegimeParams {
                market_beta_range: (0.2, 0.4),
                n_clusters: 5,
                intra_boost: 1.5,
                noise_scale: 0.1,
                hierarchy_depth: 3,
            },
        }
    }

    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.market_beta_range;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::InvalidInput(format!("market_beta_range ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
        }
        if self.n_clusters == 0 || self.hierarchy_depth == 0 {
            return Err(Error::InvalidInput("n_clusters and hierarchy_depth must be at least 1".into()));
        }
        if !(self.intra_boost >= 0.0 && self.intra_boost.is_finite()) || !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidInput("intra_boost and noise_scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn check_dim(dim: usize, required: usize) -> Result<()> {
    if dim < required {
        return Err(Error::InsufficientDimension { dim, required });
    }
    Ok(())
}

fn beta(a: f64, b: f64) -> Result<Beta<f64>> {
    Beta::new(a, b).map_err(|e| Error::InvalidInput(format!("Beta({a}, {b}): {e}")))
}

/// Onion construction of the LKJ distribution with shape `eta`.
pub fn sample_onion(dim: usize, eta: f64, seed: Seed) -> Result<CorrelationMatrix> {
    check_dim(dim, 2)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let mut rng = seed.rng();
    let mut b = eta + (dim as f64 - 2.0) / 2.0;
    let r12 = 2.0 * beta(b, b)?.sample(&mut rng) - 1.0;
    let mut r = vec![vec![1.0, r12], vec![r12, 1.0]];
    for k in 2..dim {
        b -= 0.5;
        let y = beta(k as f64 / 2.0, b)?.sample(&mut rng);
        let mut u: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut u {
            *x *= y.sqrt() / norm;
        }
        let current = SymmetricMatrix::from_rows(&r)?;
        let (l, _) = cholesky_with_jitter(&current)?;
        let z = l.matvec(&u);
        for (row, zi) in r.iter_mut().zip(&z) {
            row.push(zi.clamp(-1.0, 1.0));
        }
        let mut last = z.iter().map(|v| v.clamp(-1.0, 1.0)).collect::<Vec<_>>();
        last.push(1.0);
        r.push(last);
    }
    Ok(CorrelationMatrix::from_constructed(SymmetricMatrix::from_rows(&r)?))
}

/// C-vine with every partial correlation drawn as `2·Beta(a, b) − 1`.
pub fn sample_cvine(dim: usize, beta_a: f64, beta_b: f64, seed: Seed) -> Result<CorrelationMatrix> {
    check_dim(dim, 2)?;
    let dist = beta(beta_a, beta_b)?;
    let mut rng = seed.rng();
    let mut partial = vec![vec![0.0; dim]; dim];
    let mut s = SymmetricMatrix::identity(dim);
    for k in 0..dim - 1 {
        for i in k + 1..dim {
            partial[k][i] = 2.0 * dist.sample(&mut rng) - 1.0;
            let mut p = partial[k][i];
            for l in (0..k).rev() {
                p = p * ((1.0 - partial[l][i].powi(2)) * (1.0 - partial[l][k].powi(2))).sqrt()
                    + partial[l][i] * partial[l][k];
            }
            s.set(k, i, p.clamp(-1.0, 1.0));
        }
    }
    Ok(CorrelationMatrix::from_constructed(s))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of R's diagonal absorbed into Q).
pub fn haar_orthogonal(dim: usize, rng: &mut SeededRng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..dim {
        for k in 0..j {
            let proj: f64 = (0..dim).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..dim {
                cols[j][i] -= proj * cols[k][i];
            }
        }
        let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    Matrix::from_fn(dim, dim, |i, j| cols[j][i])
}

/// Random correlation matrix with the given spectrum: a random orthogonal
/// rotation of `diag(eigenvalues)` followed by plane rotations that fix the
/// diagonal one entry at a time.
pub fn sample_with_spectrum(eigenvalues: &[f64], seed: Seed) -> Result<CorrelationMatrix> {
    let dim = eigenvalues.len();
    check_dim(dim, 2)?;
    if eigenvalues.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("eigenvalues must be finite and non-negative".into()));
    }
    let sum: f64 = eigenvalues.iter().sum();
    if (sum - dim as f64).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("eigenvalues sum to {sum}, expected {dim}")));
    }
    let mut rng = seed.rng();
    let q = haar_orthogonal(dim, &mut rng);
    let mut a = Matrix::from_fn(dim, dim, |i, j| {
        (0..dim).map(|k| q.get(i, k) * eigenvalues[k] * q.get(j, k)).sum()
    });
    for _ in 0..4 * dim {
        let diag: Vec<f64> = (0..dim).map(|i| a.get(i, i)).collect();
        let below = (0..dim)
            .filter(|&i| diag[i] < 1.0 - SPECTRUM_DIAG_TOL)
            .min_by(|&x, &y| diag[x].total_cmp(&diag[y]));
        let above = (0..dim)
            .filter(|&j| diag[j] > 1.0 + SPECTRUM_DIAG_TOL)
            .max_by(|&x, &y| diag[x].total_cmp(&diag[y]));
        let (i, j) = match (below, above) {
            (Some(i), Some(j)) => (i, j),
            _ => break,
        };
        let (p, qv, r) = (diag[j] - 1.0, a.get(i, j), diag[i] - 1.0);
        let disc = (qv * qv - p * r).sqrt();
        let t = r / (qv + if qv >= 0.0 { disc } else { -disc });
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = c * t;
        for k in 0..dim {
            let (aki, akj) = (a.get(k, i), a.get(k, j));
            a.set(k, i, c * aki - s * akj);
            a.set(k, j, s * aki + c * akj);
        }
        for k in 0..dim {
            let (aik, ajk) = (a.get(i, k), a.get(j, k));
            a.set(i, k, c * aik - s * ajk);
            a.set(j, k, s * aik + c * ajk);
        }
    }
    let s = SymmetricMatrix::symmetrize(&a)?;
    let s = SymmetricMatrix::from_fn(dim, |i, j| if i == j { 1.0 } else { s.get(i, j).clamp(-1.0, 1.0) });
    Ok(CorrelationMatrix::from_constructed(s))
}

/// `ββᵀ + diag(1 − β²)` with `βᵢ ~ Uniform(lo, hi)`; `lo == hi` gives equal loadings.
pub fn sample_one_factor(dim: usize, beta_range: (f64, f64), seed: Seed) -> Result<CorrelationMatrix> {
    check_dim(dim, 2)?;
    let (lo, hi) = beta_range;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) {
        return Err(Error::InvalidInput(format!("beta range ({lo}, {hi}) must lie in (0, 1)")));
    }
    let mut rng = seed.rng();
    let b: Vec<f64> = (0..dim)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..hi) })
        .collect();
    Ok(CorrelationMatrix::from_constructed(SymmetricMatrix::from_fn(dim, |i, j| {
        if i == j {
            1.0
        } else {
            b[i] * b[j]
        }
    })))
}

/// Random split of `0..n` into `parts` contiguous non-empty blocks.
fn random_blocks(start: usize, n: usize, parts: usize, rng: &mut SeededRng) -> Vec<(usize, usize)> {
    let parts = parts.clamp(1, n);
    let mut cuts: Vec<usize> = (1..n).collect();
    for k in 0..parts - 1 {
        let pick = rng.random_range(k..cuts.len());
        cuts.swap(k, pick);
    }
    let mut chosen: Vec<usize> = cuts[..parts - 1].to_vec();
    chosen.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(chosen);
    bounds.push(n);
    bounds.windows(2).map(|w| (start + w[0], start + w[1])).collect()
}

/// Hierarchical factor model: a market factor, nested cluster factors and
/// random noise factors, with idiosyncratic variance filling the diagonal.
pub fn sample_regime(_regime: RegimeLabel, dim: usize, params: &RegimeParams, seed: Seed) -> Result<CorrelationMatrix> {
    check_dim(dim, 4)?;
    params.check()?;
    let mut rng = seed.rng();
    let (lo, hi) = params.market_beta_range;
    let market: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();

    // level 1 blocks, then each block split in two per further level
    let mut levels: Vec<Vec<(usize, usize)>> = vec![random_blocks(0, dim, params.n_clusters, &mut rng)];
    for _ in 1..params.hierarchy_depth {
        let mut next = Vec::new();
        for &(a, b) in levels.last().unwrap() {
            if b - a >= 2 {
                next.extend(random_blocks(a, b - a, 2, &mut rng));
            } else {
                next.push((a, b));
            }
        }
        levels.push(next);
    }

    let cluster_share = params.intra_boost / (1.0 + params.intra_boost);
    let per_level = cluster_share / params.hierarchy_depth as f64;
    let n_noise = (dim / 2).max(1);
    let mut loadings: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for i in 0..dim {
        let rest = 1.0 - market[i] * market[i];
        let mut row = vec![market[i]];
        for level in &levels {
            let strength = (rest * per_level * rng.random_range(0.7..1.0)).sqrt();
            for &(a, b) in level {
                row.push(if (a..b).contains(&i) { strength } else { 0.0 });
            }
        }
        let leftover = rest * (1.0 - cluster_share);
        let noise_var = leftover * params.noise_scale.min(0.95);
        let dir: Vec<f64> = (0..n_noise).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        row.extend(dir.iter().map(|x| x / norm * noise_var.sqrt()));
        loadings.push(row);
    }
    let s = SymmetricMatrix::from_fn(dim, |i, j| {
        if i == j {
            1.0
        } else {
            let v: f64 = loadings[i].iter().zip(&loadings[j]).map(|(a, b)| a * b).sum();
            v.clamp(-1.0, 1.0)
        }
    });
    Ok(CorrelationMatrix::from_constructed(s))
}

/// Sampler selection for batch generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SamplerSpec {
    Onion { eta: f64 },
    Cvine { beta_a: f64, beta_b: f64 },
    Spectrum { eigenvalues: Vec<f64> },
    Factor { lo: f64, hi: f64 },
    Regime { regime: RegimeLabel, params: RegimeParams },
}

impl SamplerSpec {
    pub fn draw(&self, dim: usize, seed: Seed) -> Result<CorrelationMatrix> {
        match self {
            SamplerSpec::Onion { eta } => sample_onion(dim, *eta, seed),
            SamplerSpec::Cvine { beta_a, beta_b } => sample_cvine(dim, *beta_a, *beta_b, seed),
            SamplerSpec::Spectrum { eigenvalues } => {
                if eigenvalues.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "{} eigenvalues given for dimension {dim}",
                        eigenvalues.len()
                    )));
                }
                sample_with_spectrum(eigenvalues, seed)
            }
            SamplerSpec::Factor { lo, hi } => sample_one_factor(dim, (*lo, *hi), seed),
            SamplerSpec::Regime { regime, params } => sample_regime(*regime, dim, params, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerSpec::Onion { .. } => "onion",
            SamplerSpec::Cvine { .. } => "cvine",
            SamplerSpec::Spectrum { .. } => "spectrum",
            SamplerSpec::Factor { .. } => "factor",
            SamplerSpec::Regime { .. } => "regime",
        }
    }
}

/// `count` draws; draw `i` uses `seed.stream(i)`, so the result does not
/// depend on how the work is scheduled.
pub fn sample_many(spec: &SamplerSpec, dim: usize, count: usize, seed: Seed) -> Result<Vec<CorrelationMatrix>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| spec.draw(dim, seed.stream(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, validate};

    #[test]
    fn unit_spectrum_gives_identity() {
        let c = sample_with_spectrum(&[1.0; 5], Seed(3)).unwrap();
        assert!(c.as_symmetric().frobenius_distance(&SymmetricMatrix::identity(5)) < 1e-12);
    }

    #[test]
    fn three_by_three_spectrum_round_trip() {
        let c = sample_with_spectrum(&[2.5, 0.3, 0.2], Seed(9)).unwrap();
        let ev = eigenvalues(c.as_symmetric()).unwrap();
        for (a, b) in ev.iter().zip([0.2, 0.3, 2.5]) {
            assert!((a - b).abs() < 1e-8, "{ev:?}");
        }
    }

    #[test]
    fn spectrum_sum_is_checked() {
        assert!(matches!(sample_with_spectrum(&[1.0, 1.5], Seed(0)), Err(Error::InvalidInput(_))));
        assert!(matches!(sample_with_spectrum(&[2.5, -0.5], Seed(0)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn equal_loadings_give_exact_square() {
        let c = sample_one_factor(6, (0.7, 0.7), Seed(1)).unwrap();
        for v in c.off_diagonal() {
            assert_eq!(v, 0.7 * 0.7);
        }
    }

    #[test]
    fn regime_params_are_checked() {
        let mut p = RegimeParams::defaults(RegimeLabel::Normal);
        p.market_beta_range = (0.5, 0.4);
        assert!(sample_regime(RegimeLabel::Normal, 8, &p, Seed(0)).is_err());
        assert!(matches!(
            sample_regime(RegimeLabel::Normal, 3, &RegimeParams::defaults(RegimeLabel::Normal), Seed(0)),
            Err(Error::InsufficientDimension { .. })
        ));
    }

    #[test]
    fn labels_parse_and_index() {
        for (k, r) in RegimeLabel::ALL.into_iter().enumerate() {
            assert_eq!(r.index(), k);
            assert_eq!(r.name().parse::<RegimeLabel>().unwrap(), r);
        }
    }

    #[test]
    fn draws_are_valid_and_deterministic() {
        let specs = [
            SamplerSpec::Onion { eta: 1.0 },
            SamplerSpec::Cvine { beta_a: 2.0, beta_b: 2.0 },
            SamplerSpec::Factor { lo: 0.2, hi: 0.9 },
            SamplerSpec::Regime { regime: RegimeLabel::Stressed, params: RegimeParams::defaults(RegimeLabel::Stressed) },
        ];
        for spec in &specs {
            let a = sample_many(spec, 8, 5, Seed(42)).unwrap();
            let b = sample_many(spec, 8, 5, Seed(42)).unwrap();
            assert_eq!(a, b);
            for c in &a {
                assert!(validate(c.as_symmetric(), 1e-8).unwrap().is_valid, "{}", spec.name());
            }
        }
    }
}
