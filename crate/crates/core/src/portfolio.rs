//! Risk-based allocation (HRP, inverse-variance, equal weight), Gaussian
//! return panels with a prescribed correlation, and simple backtests.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::{average_linkage, distance_matrix, Dendrogram};
use crate::linalg::{cholesky_lower, cholesky_with_jitter, sample_covariance, CorrelationMatrix, CovarianceMatrix, Matrix, SymmetricMatrix};
use crate::rng::Seed;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hrp,
    Ivp,
    Ew,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Hrp, Method::Ivp, Method::Ew];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hrp => "hrp",
            Method::Ivp => "ivp",
            Method::Ew => "ew",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown allocation method '{s}'")))
    }
}

/// Long-only weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortfolioWeights(pub Vec<f64>);

impl PortfolioWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Neumaier-compensated sum.
    pub fn sum(&self) -> f64 {
        compensated_sum(&self.0)
    }
}

pub fn compensated_sum(v: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub in_sample_vol: f64,
    pub out_sample_vol: f64,
    pub max_drawdown: f64,
    pub decay: f64,
}

pub fn ew_weights(dim: usize) -> Result<PortfolioWeights> {
    if dim == 0 {
        return Err(Error::InvalidInput("equal weights need at least one asset".into()));
    }
    Ok(PortfolioWeights(vec![1.0 / dim as f64; dim]))
}

fn inverse_variance(vars: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = vars.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("variance {v} is not positive")));
    }
    let inv: Vec<f64> = vars.iter().map(|v| 1.0 / v).collect();
    let total = compensated_sum(&inv);
    Ok(inv.iter().map(|x| x / total).collect())
}

pub fn ivp_weights(cov: &SymmetricMatrix) -> Result<PortfolioWeights> {
    Ok(PortfolioWeights(inverse_variance(&cov.diag())?))
}

/// Leaf order of the dendrogram with the children of every node ordered by
/// (size, merge height, smallest leaf variance), so that relabelling the
/// assets only relabels the order.
fn quasi_diagonal_order(tree: &Dendrogram, vars: &[f64]) -> Vec<usize> {
    let key = |node: usize| {
        let leaves = tree.leaves(node);
        let min_var = leaves.iter().map(|&i| vars[i]).fold(f64::INFINITY, f64::min);
        (tree.size(node), tree.height(node), min_var)
    };
    let mut out = Vec::with_capacity(tree.n);
    let mut stack = vec![tree.root()];
    while let Some(v) = stack.pop() {
        if v < tree.n {
            out.push(v);
            continue;
        }
        let m = &tree.merges[v - tree.n];
        let (ka, kb) = (key(m.left), key(m.right));
        let left_first = (ka.0, ka.1, ka.2).partial_cmp(&(kb.0, kb.1, kb.2)) != Some(std::cmp::Ordering::Greater);
        let (first, second) = if left_first { (m.left, m.right) } else { (m.right, m.left) };
        stack.push(second);
        stack.push(first);
    }
    out
}

fn cluster_variance(cov: &SymmetricMatrix, items: &[usize]) -> Result<f64> {
    let vars: Vec<f64> = items.iter().map(|&i| cov.get(i, i)).collect();
    let w = inverse_variance(&vars)?;
    let mut v = 0.0;
    for (a, &i) in items.iter().enumerate() {
        for (b, &j) in items.iter().enumerate() {
            v += w[a] * w[b] * cov.get(i, j);
        }
    }
    Ok(v)
}

/// Hierarchical risk parity: average-linkage tree on `√(2(1 − ρ))`,
/// quasi-diagonal ordering, then recursive bisection of the ordered list
/// with budgets split by inverse cluster variance.
pub fn hrp_weights(cov: &CovarianceMatrix) -> Result<PortfolioWeights> {
    hrp_weights_sym(cov.as_symmetric())
}

fn hrp_weights_sym(cov: &SymmetricMatrix) -> Result<PortfolioWeights> {
    cholesky_lower(cov)?;
    let n = cov.dim();
    let vars = cov.diag();
    let corr = CovarianceMatrix::new(cov.clone())?.correlation();
    let dist = distance_matrix(&corr);
    let tree = average_linkage(&dist, n);
    let order = quasi_diagonal_order(&tree, &vars);
    let mut w = vec![1.0; n];
    let mut clusters: Vec<Vec<usize>> = vec![order];
    while !clusters.is_empty() {
        let mut next = Vec::new();
        for c in clusters {
            if c.len() < 2 {
                continue;
            }
            let (left, right) = c.split_at(c.len() / 2);
            let vl = cluster_variance(cov, left)?;
            let vr = cluster_variance(cov, right)?;
            let alpha = 1.0 - vl / (vl + vr);
            for &i in left {
                w[i] *= alpha;
            }
            for &i in right {
                w[i] *= 1.0 - alpha;
            }
            next.push(left.to_vec());
            next.push(right.to_vec());
        }
        clusters = next;
    }
    Ok(PortfolioWeights(w))
}

pub fn weights(method: Method, cov: &SymmetricMatrix) -> Result<PortfolioWeights> {
    match method {
        Method::Hrp => hrp_weights_sym(cov),
        Method::Ivp => ivp_weights(cov),
        Method::Ew => ew_weights(cov.dim()),
    }
}

/// Per-asset daily vols drawn lognormal around 20% annualized.
pub fn default_vols(dim: usize, seed: Seed) -> Vec<f64> {
    let dist = LogNormal::new((0.2 / TRADING_DAYS.sqrt()).ln(), 0.25).expect("valid lognormal");
    let mut rng = seed.rng();
    (0..dim).map(|_| dist.sample(&mut rng)).collect()
}

/// Zero-mean Gaussian panel (`t × dim`) with covariance
/// `diag(vols) · corr · diag(vols)`.
pub fn simulate_returns(corr: &CorrelationMatrix, vols: &[f64], t: usize, seed: Seed) -> Result<Matrix> {
    let dim = corr.dim();
    if vols.len() != dim || vols.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("vols must be positive, one per asset".into()));
    }
    if t < 2 {
        return Err(Error::InvalidInput("need at least two periods".into()));
    }
    let (l, _) = cholesky_with_jitter(corr.as_symmetric())?;
    let mut rng = seed.rng();
    let mut out = Matrix::zeros(t, dim);
    let mut z = vec![0.0; dim];
    for r in 0..t {
        for x in z.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let row = out.row_mut(r);
        for i in 0..dim {
            let li = l.row(i);
            let mut s = 0.0;
            for k in 0..=i {
                s += li[k] * z[k];
            }
            row[i] = s * vols[i];
        }
    }
    Ok(out)
}

fn portfolio_returns(panel: &Matrix, w: &[f64]) -> Vec<f64> {
    (0..panel.rows())
        .map(|r| panel.row(r).iter().zip(w).map(|(x, y)| x * y).sum())
        .collect()
}

/// Annualized sample volatility (divisor `T − 1`).
pub fn annualized_vol(r: &[f64]) -> f64 {
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var * TRADING_DAYS).sqrt()
}

/// Largest peak-to-trough loss of compounded wealth, in `[0, 1]`.
pub fn max_drawdown(r: &[f64]) -> f64 {
    let mut wealth: f64 = 1.0;
    let mut peak: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for x in r {
        wealth *= 1.0 + x;
        peak = peak.max(wealth);
        worst = worst.max((peak - wealth) / peak);
    }
    worst.clamp(0.0, 1.0)
}

/// In- and out-of-sample panels shared by every method of one simulation.
pub struct Panels {
    pub in_sample: Matrix,
    pub out_sample: Matrix,
}

pub fn simulate_panels(corr: &CorrelationMatrix, vols: &[f64], t_in: usize, t_out: usize, seed: Seed) -> Result<Panels> {
    let dim = corr.dim();
    if t_in < dim + 2 || t_out < dim + 2 {
        return Err(Error::InvalidInput(format!("T_in and T_out must be at least dim + 2 = {}", dim + 2)));
    }
    Ok(Panels {
        in_sample: simulate_returns(corr, vols, t_in, seed.stream(0))?,
        out_sample: simulate_returns(corr, vols, t_out, seed.stream(1))?,
    })
}

pub fn evaluate(method: Method, panels: &Panels) -> Result<RiskReport> {
    let cov = sample_covariance(&panels.in_sample);
    let w = weights(method, &cov)?;
    let in_vol = annualized_vol(&portfolio_returns(&panels.in_sample, w.as_slice()));
    let out = portfolio_returns(&panels.out_sample, w.as_slice());
    let out_vol = annualized_vol(&out);
    Ok(RiskReport {
        in_sample_vol: in_vol,
        out_sample_vol: out_vol,
        max_drawdown: max_drawdown(&out),
        decay: out_vol - in_vol,
    })
}

pub fn backtest(corr: &CorrelationMatrix, vols: &[f64], method: Method, t_in: usize, t_out: usize, seed: Seed) -> Result<RiskReport> {
    evaluate(method, &simulate_panels(corr, vols, t_in, t_out, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(rows: &[Vec<f64>]) -> CovarianceMatrix {
        CovarianceMatrix::new(SymmetricMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn two_asset_hrp_is_inverse_variance() {
        let c = cov(&[vec![0.04, 0.01], vec![0.01, 0.09]]);
        let w = hrp_weights(&c).unwrap();
        assert!((w.0[0] - 0.09 / 0.13).abs() < 1e-15);
        assert!((w.0[1] - 0.04 / 0.13).abs() < 1e-15);
    }

    #[test]
    fn ivp_by_hand() {
        let w = ivp_weights(&SymmetricMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 4.0]]).unwrap()).unwrap();
        assert!((w.0[0] - 0.8).abs() < 1e-15 && (w.0[1] - 0.2).abs() < 1e-15);
        assert!(ivp_weights(&SymmetricMatrix::diagonal(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn equal_weights() {
        assert_eq!(ew_weights(4).unwrap().0, vec![0.25; 4]);
        assert_eq!(ew_weights(80).unwrap().0, vec![0.0125; 80]);
        assert_eq!(ew_weights(4).unwrap().sum(), 1.0);
        assert_eq!(ew_weights(80).unwrap().sum(), 1.0);
    }

    #[test]
    fn drawdown_by_hand() {
        // wealth 1.1, 0.55, 0.605: peak 1.1, trough 0.55
        assert!((max_drawdown(&[0.1, -0.5, 0.1]) - 0.5).abs() < 1e-15);
        assert_eq!(max_drawdown(&[0.01, 0.02]), 0.0);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
