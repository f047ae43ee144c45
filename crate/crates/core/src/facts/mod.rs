//! Stylized facts of financial correlation matrices and the feature vector
//! used by the classifier, the evaluation and the Monte Carlo surrogate.

pub mod cluster;
pub mod mst;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, CorrelationMatrix};

pub use cluster::{average_linkage, best_silhouette, cophenetic_correlation, Dendrogram, Merge};
pub use mst::{correlation_distance, distance_matrix, mst, mst_of_similarity, Edge};

/// Default `dim / T` ratio: 80 assets over one trading year.
pub const DEFAULT_Q_RATIO: f64 = 80.0 / 252.0;
/// Relative eigenvalue gap below which the top eigenvector is not unique.
const EIGEN_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactFlag {
    /// Top eigenvalue is (numerically) repeated, so sf4 and the eigenvector
    /// dispersion depend on an arbitrary basis choice.
    DegenerateTopEigenvector,
    /// Dimension too small for SF5/SF6; those fields are NaN.
    InsufficientDimension,
    /// Distances or cophenetic distances are constant; reported as 0.
    CopheneticUndefined,
    /// Fewer than two distinct MST degrees ≥ 2; exponent reported as 0.
    TailExponentUndefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFactReport {
    pub sf1_mean_offdiag: f64,
    pub sf1_skew: f64,
    pub sf2_top_eig_share: f64,
    pub sf2_mp_bounds: (f64, f64),
    pub sf3_outlier_eig_fraction: f64,
    pub sf4_first_evec_sign_consistency: f64,
    pub sf5_cophenetic_coeff: f64,
    pub sf6_mst_degree_tail_exponent: f64,
    pub sf6_max_degree: usize,
    pub flags: Vec<FactFlag>,
}

/// Marchenko–Pastur support `((1 − √q)², (1 + √q)²)`.
pub fn marchenko_pastur_bounds(q: f64) -> (f64, f64) {
    let s = q.sqrt();
    ((1.0 - s).powi(2), (1.0 + s).powi(2))
}

fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let skew = if m2 > 1e-300 { m3 / m2.powf(1.5) } else { 0.0 };
    (mean, m2.sqrt(), skew)
}

fn top_gap_degenerate(values: &[f64]) -> bool {
    let n = values.len();
    values[n - 1] - values[n - 2] <= EIGEN_GAP_TOL * values[n - 1].abs().max(1.0)
}

fn sign_consistency(v: &[f64]) -> f64 {
    let pos = v.iter().filter(|&&x| x > 0.0).count();
    let neg = v.iter().filter(|&&x| x < 0.0).count();
    pos.max(neg) as f64 / v.len() as f64
}

struct Hierarchy {
    cophenetic: f64,
    cophenetic_defined: bool,
    tail: f64,
    tail_defined: bool,
    max_degree: usize,
}

fn hierarchy(c: &CorrelationMatrix) -> Hierarchy {
    let n = c.dim();
    let dist = distance_matrix(c);
    let tree = average_linkage(&dist, n);
    let coph = cophenetic_correlation(&dist, n, &tree);
    let edges = mst(c);
    let deg = mst::degrees(n, &edges);
    let tail = mst::tail_exponent(&deg);
    Hierarchy {
        cophenetic: coph.unwrap_or(0.0),
        cophenetic_defined: coph.is_some(),
        tail: tail.unwrap_or(0.0),
        tail_defined: tail.is_some(),
        max_degree: deg.iter().copied().max().unwrap_or(0),
    }
}

pub fn stylized_report(c: &CorrelationMatrix, q_ratio: f64) -> Result<StylizedFactReport> {
    if !(q_ratio > 0.0 && q_ratio.is_finite()) {
        return Err(Error::InvalidInput(format!("q_ratio must be positive, got {q_ratio}")));
    }
    let n = c.dim();
    let off = c.off_diagonal();
    let (mean, _, skew) = moments(&off);
    let e = eigh(c.as_symmetric())?;
    let top = e.values[n - 1];
    let (lm, lp) = marchenko_pastur_bounds(q_ratio);
    let outliers = e.values[..n - 1].iter().filter(|&&l| l > lp).count();
    let mut flags = Vec::new();
    if top_gap_degenerate(&e.values) {
        flags.push(FactFlag::DegenerateTopEigenvector);
    }
    let sf4 = sign_consistency(&e.top_vector());
    let (sf5, sf6, max_deg) = if n < 4 {
        flags.push(FactFlag::InsufficientDimension);
        (f64::NAN, f64::NAN, 0)
    } else {
        let h = hierarchy(c);
        if !h.cophenetic_defined {
            flags.push(FactFlag::CopheneticUndefined);
        }
        if !h.tail_defined {
            flags.push(FactFlag::TailExponentUndefined);
        }
        (h.cophenetic, h.tail, h.max_degree)
    };
    Ok(StylizedFactReport {
        sf1_mean_offdiag: mean,
        sf1_skew: skew,
        sf2_top_eig_share: top / n as f64,
        sf2_mp_bounds: (lm, lp),
        sf3_outlier_eig_fraction: outliers as f64 / n as f64,
        sf4_first_evec_sign_consistency: sf4,
        sf5_cophenetic_coeff: sf5,
        sf6_mst_degree_tail_exponent: sf6,
        sf6_max_degree: max_deg,
        flags,
    })
}

/// Correlation-structure features in the fixed order of [`FeatureVector::NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean_corr: f64,
    pub std_corr: f64,
    pub eig1_share: f64,
    pub top5pct_eig_share: f64,
    pub evec1_dispersion: f64,
    pub cophenetic_coeff: f64,
    pub cluster_separation: f64,
    pub mst_tail_exponent: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<FactFlag>,
}

impl FeatureVector {
    pub const LEN: usize = 8;
    pub const NAMES: [&'static str; 8] = [
        "mean_corr",
        "std_corr",
        "eig1_share",
        "top5pct_eig_share",
        "evec1_dispersion",
        "cophenetic_coeff",
        "cluster_separation",
        "mst_tail_exponent",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.mean_corr,
            self.std_corr,
            self.eig1_share,
            self.top5pct_eig_share,
            self.evec1_dispersion,
            self.cophenetic_coeff,
            self.cluster_separation,
            self.mst_tail_exponent,
        ]
    }
}

fn identical_columns(c: &CorrelationMatrix) -> Option<(usize, usize)> {
    let n = c.dim();
    for i in 0..n {
        for j in i + 1..n {
            if c.get(i, j) >= 1.0 - 1e-12 && (0..n).all(|k| (c.get(i, k) - c.get(j, k)).abs() <= 1e-12) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Features of one matrix:
/// `top5pct_eig_share` is the sum of the `⌈0.05·dim⌉` eigenvalues after the
/// largest, over `dim`; `evec1_dispersion` is the standard deviation of the
/// top eigenvector scaled by `√dim` (zero when all entries are equal).
pub fn feature_vector(c: &CorrelationMatrix) -> Result<FeatureVector> {
    let n = c.dim();
    if n < 4 {
        return Err(Error::InsufficientDimension { dim: n, required: 4 });
    }
    if let Some((i, j)) = identical_columns(c) {
        return Err(Error::DegenerateStructure(format!("assets {i} and {j} have identical columns")));
    }
    let off = c.off_diagonal();
    let (mean, std, _) = moments(&off);
    let e = eigh(c.as_symmetric())?;
    let mut flags = Vec::new();
    if top_gap_degenerate(&e.values) {
        flags.push(FactFlag::DegenerateTopEigenvector);
    }
    let k = ((0.05 * n as f64).ceil() as usize).max(1);
    let next: f64 = e.values[n - 1 - k..n - 1].iter().sum();
    let v: Vec<f64> = e.top_vector().iter().map(|x| x * (n as f64).sqrt()).collect();
    let (_, dispersion, _) = moments(&v);
    let h = hierarchy(c);
    if !h.cophenetic_defined {
        flags.push(FactFlag::CopheneticUndefined);
    }
    if !h.tail_defined {
        flags.push(FactFlag::TailExponentUndefined);
    }
    let dist = distance_matrix(c);
    let (separation, _) = best_silhouette(&dist, n);
    Ok(FeatureVector {
        mean_corr: mean,
        std_corr: std,
        eig1_share: e.values[n - 1] / n as f64,
        top5pct_eig_share: next / n as f64,
        evec1_dispersion: dispersion,
        cophenetic_coeff: h.cophenetic,
        cluster_separation: separation,
        mst_tail_exponent: h.tail,
        flags,
    })
}
