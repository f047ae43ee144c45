//! Regime-conditioned Monte Carlo of allocation methods, linear surrogate
//! models on correlation features, and exact Shapley attributions.
//!
//! Simulation `k` of regime `r` uses the seed `master.stream(r.index() * count + k)`.
//! Sub-streams `"matrix"`, `"vols"` and `"returns"` are taken from it with
//! [`Seed::named`], so a record depends only on its own index.

use std::io::{BufRead, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::{feature_vector, FeatureVector};
use crate::linalg::CorrelationMatrix;
use crate::portfolio::{default_vols, evaluate, simulate_panels, Method, RiskReport};
use crate::provenance::Provenance;
use crate::rng::Seed;
use crate::samplers::{sample_regime, RegimeLabel, RegimeParams};

pub const RECORD_FORMAT: &str = "ECREC";
pub const RECORD_VERSION: u32 = 1;
pub const MAX_SHAPLEY_FEATURES: usize = 12;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const MIN_RECORDS_PER_REGIME: usize = 100;

/// Source of correlation matrices for a given regime.
pub trait MatrixSource: Sync {
    fn draw(&self, regime: RegimeLabel, dim: usize, seed: Seed) -> Result<CorrelationMatrix>;
    fn name(&self) -> String;
}

/// Parametric regime sampler used in place of a trained generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSource {
    pub params: [RegimeParams; 3],
}

impl Default for SurrogateSource {
    fn default() -> Self {
        SurrogateSource { params: RegimeLabel::ALL.map(RegimeParams::defaults) }
    }
}

impl MatrixSource for SurrogateSource {
    fn draw(&self, regime: RegimeLabel, dim: usize, seed: Seed) -> Result<CorrelationMatrix> {
        sample_regime(regime, dim, &self.params[regime.index()], seed)
    }

    fn name(&self) -> String {
        "surrogate".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub dim: usize,
    /// Simulations per regime.
    pub count: usize,
    #[serde(default = "all_regimes")]
    pub regimes: Vec<RegimeLabel>,
    #[serde(default = "default_t")]
    pub t_in: usize,
    #[serde(default = "default_t")]
    pub t_out: usize,
    pub seed: Seed,
}

fn all_regimes() -> Vec<RegimeLabel> {
    RegimeLabel::ALL.to_vec()
}

fn default_t() -> usize {
    252
}

impl McConfig {
    pub fn check(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidInput("count must be at least 1".into()));
        }
        if self.dim < 4 {
            return Err(Error::InsufficientDimension { dim: self.dim, required: 4 });
        }
        if self.t_in < self.dim + 2 || self.t_out < self.dim + 2 {
            return Err(Error::InvalidInput(format!("t_in and t_out must be at least dim + 2 = {}", self.dim + 2)));
        }
        if self.regimes.is_empty() {
            return Err(Error::InvalidInput("no regimes requested".into()));
        }
        let mut seen = [false; 3];
        for r in &self.regimes {
            if std::mem::replace(&mut seen[r.index()], true) {
                return Err(Error::InvalidInput(format!("regime {r} listed twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub index: u64,
    pub regime: RegimeLabel,
    pub seed: Seed,
    pub features: FeatureVector,
    pub hrp: RiskReport,
    pub ivp: RiskReport,
    pub ew: RiskReport,
    pub hrp_minus_ivp_outvol: f64,
}

impl McRecord {
    pub fn report(&self, method: Method) -> &RiskReport {
        match method {
            Method::Hrp => &self.hrp,
            Method::Ivp => &self.ivp,
            Method::Ew => &self.ew,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDraw {
    pub index: u64,
    pub regime: RegimeLabel,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct McRun {
    pub records: Vec<McRecord>,
    pub skipped: Vec<SkippedDraw>,
}

fn simulate_one(config: &McConfig, source: &dyn MatrixSource, regime: RegimeLabel, index: u64) -> Result<McRecord> {
    let seed = config.seed.stream(index);
    let corr = source.draw(regime, config.dim, seed.named("matrix"))?;
    let features = feature_vector(&corr)?;
    let vols = default_vols(config.dim, seed.named("vols"));
    let panels = simulate_panels(&corr, &vols, config.t_in, config.t_out, seed.named("returns"))?;
    let hrp = evaluate(Method::Hrp, &panels)?;
    let ivp = evaluate(Method::Ivp, &panels)?;
    let ew = evaluate(Method::Ew, &panels)?;
    Ok(McRecord {
        index,
        regime,
        seed,
        features,
        hrp_minus_ivp_outvol: hrp.out_sample_vol - ivp.out_sample_vol,
        hrp,
        ivp,
        ew,
    })
}

/// Runs every simulation on the current rayon pool. Failed draws are
/// reported in [`McRun::skipped`] and never retried.
pub fn run(config: &McConfig, source: &dyn MatrixSource) -> Result<McRun> {
    config.check()?;
    let jobs: Vec<(RegimeLabel, u64)> = config
        .regimes
        .iter()
        .flat_map(|&r| (0..config.count as u64).map(move |k| (r, r.index() as u64 * config.count as u64 + k)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(regime, index)| (regime, index, simulate_one(config, source, regime, index)))
        .collect();
    let mut out = McRun::default();
    for (regime, index, r) in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.skipped.push(SkippedDraw { index, regime, reason: e.to_string() }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordHeader {
    format: String,
    version: u32,
    provenance: Provenance,
}

/// NDJSON: one header line, then one record per line.
pub fn write_records(mut w: impl Write, records: &[McRecord], provenance: &Provenance) -> Result<()> {
    let header = RecordHeader { format: RECORD_FORMAT.into(), version: RECORD_VERSION, provenance: provenance.clone() };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(r: impl BufRead) -> Result<(Provenance, Vec<McRecord>)> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| Error::CorruptData("empty record file".into()))??;
    let header: RecordHeader =
        serde_json::from_str(&first).map_err(|e| Error::CorruptData(format!("bad record header: {e}")))?;
    if header.format != RECORD_FORMAT {
        return Err(Error::CorruptData(format!("not a record file (format '{}')", header.format)));
    }
    if header.version != RECORD_VERSION {
        return Err(Error::UnsupportedVersion(format!("record version {}", header.version)));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: McRecord = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptData(format!("record on line {}: {e}", i + 2)))?;
        out.push(rec);
    }
    Ok((header.provenance, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Target {
    /// HRP minus IVP out-of-sample vol.
    Outperformance,
    /// Out-of-sample minus in-sample vol of one method.
    Decay { method: Method },
}

impl Target {
    pub fn value(&self, r: &McRecord) -> f64 {
        match self {
            Target::Outperformance => r.hrp_minus_ivp_outvol,
            Target::Decay { method } => r.report(*method).decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
}

/// OLS on standardized features: `ŷ = b₀ + Σ bᵢ (xᵢ − mᵢ)/sᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub kind: ModelKind,
    pub target: Option<Target>,
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_samples: usize,
}

impl SurrogateModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .zip(self.means.iter().zip(&self.scales))
                .map(|((b, x), (m, s))| b * (x - m) / s)
                .sum::<f64>()
    }

    /// Slopes in raw feature units.
    pub fn raw_slopes(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.scales).map(|(b, s)| b / s).collect()
    }
}

/// Least squares with intercept via modified Gram–Schmidt.
pub fn fit_linear(names: &[String], x: &[Vec<f64>], y: &[f64]) -> Result<SurrogateModel> {
    let k = names.len();
    let n = y.len();
    if x.len() != n || x.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidInput("design rows must match targets and feature names".into()));
    }
    if k == 0 || n < 10 * k {
        return Err(Error::InvalidInput(format!("need at least {} records for {k} features, got {n}", 10 * k)));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature or target".into()));
    }
    let mut means = vec![0.0; k];
    let mut scales = vec![0.0; k];
    for j in 0..k {
        let m = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let v = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        scales[j] = v.sqrt();
    }
    if let Some(j) = (0..k).find(|&j| !(scales[j] > 1e-12 * means[j].abs().max(1e-300))) {
        return Err(Error::RankDeficient(vec![names[j].clone()]));
    }
    // columns: intercept then standardized features
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    cols.push(vec![1.0; n]);
    for j in 0..k {
        cols.push(x.iter().map(|r| (r[j] - means[j]) / scales[j]).collect());
    }
    let p = k + 1;
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut r = vec![vec![0.0; p]; p];
    for (j, col) in cols.iter().enumerate() {
        let norm0 = dot(col, col).sqrt();
        let mut v = col.clone();
        for (i, qi) in q.iter().enumerate() {
            let rij = dot(qi, &v);
            r[i][j] = rij;
            axpy(&mut v, -rij, qi);
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= 1e-9 * norm0 {
            // express the column through the earlier ones to name its partners
            let c = back_substitute(&r, j, &(0..j).map(|i| r[i][j]).collect::<Vec<_>>());
            let mut culprits: Vec<String> =
                (1..j).filter(|&i| c[i].abs() > 1e-8).map(|i| names[i - 1].clone()).collect();
            culprits.push(names[j - 1].clone());
            return Err(Error::RankDeficient(culprits));
        }
        r[j][j] = norm;
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    let mut resid = y.to_vec();
    let mut qty = vec![0.0; p];
    for (i, qi) in q.iter().enumerate() {
        qty[i] = dot(qi, &resid);
        axpy(&mut resid, -qty[i], qi);
    }
    let beta = back_substitute(&r, p, &qty);
    let ymean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ymean).powi(2)).sum();
    let ssr: f64 = resid.iter().map(|v| v * v).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    Ok(SurrogateModel {
        kind: ModelKind::Linear,
        target: None,
        feature_names: names.to_vec(),
        means,
        scales,
        coefficients: beta[1..].to_vec(),
        intercept: beta[0],
        r_squared,
        n_samples: n,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Solves the leading `m × m` upper-triangular block of `r`.
fn back_substitute(r: &[Vec<f64>], m: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| r[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / r[i][i];
    }
    x
}

fn design(records: &[McRecord]) -> Vec<Vec<f64>> {
    records.iter().map(|r| r.features.to_array().to_vec()).collect()
}

pub fn feature_names() -> Vec<String> {
    FeatureVector::NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn fit_surrogate(records: &[McRecord], target: Target) -> Result<SurrogateModel> {
    let y: Vec<f64> = records.iter().map(|r| target.value(r)).collect();
    let mut m = fit_linear(&feature_names(), &design(records), &y)?;
    m.target = Some(target);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyAttribution {
    pub feature_names: Vec<String>,
    pub phi: Vec<f64>,
    pub baseline: f64,
    pub prediction: f64,
}

impl ShapleyAttribution {
    /// `|Σφ − (prediction − baseline)|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.prediction - self.baseline)).abs()
    }
}

/// Exact interventional Shapley values: features outside a coalition take
/// their background mean.
pub fn shapley_values(model: &SurrogateModel, x: &[f64], background_means: &[f64]) -> Result<ShapleyAttribution> {
    let k = model.feature_names.len();
    if k > MAX_SHAPLEY_FEATURES {
        return Err(Error::Unsupported(format!(
            "exact Shapley enumeration is limited to {MAX_SHAPLEY_FEATURES} features, model has {k}"
        )));
    }
    if x.len() != k || background_means.len() != k {
        return Err(Error::InvalidInput("feature vector length does not match the model".into()));
    }
    let full = 1usize << k;
    let mut value = vec![0.0; full];
    let mut z = vec![0.0; k];
    for (mask, v) in value.iter_mut().enumerate() {
        for j in 0..k {
            z[j] = if mask >> j & 1 == 1 { x[j] } else { background_means[j] };
        }
        *v = model.predict(&z);
    }
    // |S|!(k−|S|−1)!/k!
    let mut fact = vec![1.0f64; k + 1];
    for i in 1..=k {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..k).map(|s| fact[s] * fact[k - s - 1] / fact[k]).collect();
    let mut phi = vec![0.0; k];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        let mut acc = 0.0;
        for mask in (0..full).filter(|m| m & bit == 0) {
            acc += weight[mask.count_ones() as usize] * (value[mask | bit] - value[mask]);
        }
        *p = acc;
    }
    Ok(ShapleyAttribution {
        feature_names: model.feature_names.clone(),
        phi,
        baseline: value[0],
        prediction: value[full - 1],
    })
}

pub fn background_means(background: &[McRecord]) -> Result<Vec<f64>> {
    if background.is_empty() {
        return Err(Error::InvalidInput("empty background set".into()));
    }
    let mut m = vec![0.0; FeatureVector::LEN];
    for r in background {
        for (a, b) in m.iter_mut().zip(r.features.to_array()) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= background.len() as f64);
    Ok(m)
}

pub fn shapley(model: &SurrogateModel, record: &McRecord, background: &[McRecord]) -> Result<ShapleyAttribution> {
    shapley_values(model, &record.features.to_array(), &background_means(background)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFinding {
    pub regime: RegimeLabel,
    pub n: usize,
    /// At least [`MIN_RECORDS_PER_REGIME`] records.
    pub sufficient: bool,
    pub hrp_win_rate: f64,
    pub win_rate_ci: (f64, f64),
    pub mean_gap: f64,
    pub mean_gap_ci: (f64, f64),
    pub corr_gap_cophenetic: Option<f64>,
    pub corr_gap_evec1_dispersion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Findings {
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub regimes: Vec<RegimeFinding>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn pearson_corr(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    // spread at rounding level counts as constant
    let flat = |s: f64, v: &[f64]| s <= 1e-24 * v.iter().map(|x| x * x).sum::<f64>();
    if flat(saa, a) || flat(sbb, b) {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Per-regime HRP win rates and mean gaps with 95% percentile-bootstrap
/// intervals. Regimes without records are omitted.
pub fn regime_findings(records: &[McRecord], seed: Seed) -> Findings {
    let mut regimes = Vec::new();
    for regime in RegimeLabel::ALL {
        let recs: Vec<&McRecord> = records.iter().filter(|r| r.regime == regime).collect();
        if recs.is_empty() {
            continue;
        }
        let n = recs.len();
        let gaps: Vec<f64> = recs.iter().map(|r| r.hrp_minus_ivp_outvol).collect();
        let wins: Vec<f64> = gaps.iter().map(|&g| if g < 0.0 { 1.0 } else { 0.0 }).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut rng = seed.stream(regime.index() as u64).rng();
        let mut boot_win = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        let mut boot_gap = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for _ in 0..BOOTSTRAP_RESAMPLES {
            let (mut w, mut g) = (0.0, 0.0);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                w += wins[i];
                g += gaps[i];
            }
            boot_win.push(w / n as f64);
            boot_gap.push(g / n as f64);
        }
        boot_win.sort_by(f64::total_cmp);
        boot_gap.sort_by(f64::total_cmp);
        let coph: Vec<f64> = recs.iter().map(|r| r.features.cophenetic_coeff).collect();
        let disp: Vec<f64> = recs.iter().map(|r| r.features.evec1_dispersion).collect();
        regimes.push(RegimeFinding {
            regime,
            n,
            sufficient: n >= MIN_RECORDS_PER_REGIME,
            hrp_win_rate: mean(&wins),
            win_rate_ci: (quantile(&boot_win, 0.025), quantile(&boot_win, 0.975)),
            mean_gap: mean(&gaps),
            mean_gap_ci: (quantile(&boot_gap, 0.025), quantile(&boot_gap, 0.975)),
            corr_gap_cophenetic: pearson_corr(&gaps, &coph),
            corr_gap_evec1_dispersion: pearson_corr(&gaps, &disp),
        });
    }
    Findings { bootstrap_resamples: BOOTSTRAP_RESAMPLES, confidence: 0.95, regimes }
}
