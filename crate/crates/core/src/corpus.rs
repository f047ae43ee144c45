//! Labeled corpora of correlation matrices: rolling-window ingestion of
//! returns, surrogate generation, and the ECORP v1 container.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{nearest_correlation, pearson, validate, CorrelationMatrix, Matrix, SymmetricMatrix};
use crate::provenance::{sha256_hex, Provenance};
use crate::rng::Seed;
use crate::samplers::{sample_regime, RegimeLabel, RegimeParams};

pub const FORMAT: &str = "ECORP";
pub const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "matrices.f64le";
/// PSD tolerance below which estimated matrices are repaired.
pub const REPAIR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Pearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub length: usize,
    pub step: usize,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
}

fn default_estimator() -> Estimator {
    Estimator::Pearson
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { length: 252, step: 21, estimator: Estimator::Pearson }
    }
}

impl WindowSpec {
    /// Window start offsets for `t` observations.
    pub fn starts(&self, t: usize) -> Vec<usize> {
        if t < self.length {
            return Vec::new();
        }
        (0..=(t - self.length) / self.step).map(|k| k * self.step).collect()
    }
}

/// How windows are labeled from the equally weighted portfolio's
/// cumulative return (sum of per-period portfolio returns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum LabelRule {
    /// Lowest third stressed, middle normal, top third rally.
    Tercile,
    /// Below `-threshold` stressed, above `threshold` rally.
    Fixed { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSource {
    Ingested,
    Surrogate,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ItemMeta {
    Window {
        start: usize,
        end: usize,
        portfolio_return: f64,
        repaired: bool,
    },
    Draw {
        index: usize,
        seed: Seed,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub matrix: CorrelationMatrix,
    pub label: RegimeLabel,
    pub meta: ItemMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub dim: usize,
    pub items: Vec<CorpusItem>,
    pub source: CorpusSource,
    pub asset_names: Vec<String>,
    pub window: Option<WindowSpec>,
    pub repairs: usize,
    pub provenance: Option<Provenance>,
}

impl LabeledCorpus {
    pub fn empty(dim: usize, source: CorpusSource) -> Self {
        LabeledCorpus {
            dim,
            items: Vec::new(),
            source,
            asset_names: Vec::new(),
            window: None,
            repairs: 0,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<RegimeLabel> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn count(&self, label: RegimeLabel) -> usize {
        self.items.iter().filter(|i| i.label == label).count()
    }

    pub fn by_label(&self, label: RegimeLabel) -> Vec<&CorrelationMatrix> {
        self.items.iter().filter(|i| i.label == label).map(|i| &i.matrix).collect()
    }
}

/// Reads a returns CSV: header row of asset names, one row per period.
pub fn read_returns_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let d = names.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1, first data row is line 2
        let line = r + 2;
        if record.len() != d {
            return Err(Error::ParseError {
                row: line,
                col: record.len().min(d) + 1,
                message: format!("expected {d} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                row: line,
                col: c + 1,
                message: format!("not a number: '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseError { row: line, col: c + 1, message: format!("non-finite value '{cell}'") });
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok((names, Matrix::from_vec(rows, d, data)?))
}

pub fn ingest_returns(path: &Path, window: WindowSpec, rule: LabelRule) -> Result<LabeledCorpus> {
    let (names, data) = read_returns_csv(path)?;
    ingest_matrix(names, &data, window, rule)
}

fn label_windows(returns: &[f64], rule: LabelRule) -> Vec<RegimeLabel> {
    match rule {
        LabelRule::Tercile => {
            let n = returns.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| returns[a].total_cmp(&returns[b]).then(a.cmp(&b)));
            let mut labels = vec![RegimeLabel::Normal; n];
            for (rank, &i) in order.iter().enumerate() {
                labels[i] = RegimeLabel::from_index(rank * 3 / n).expect("rank bucket < 3");
            }
            labels
        }
        LabelRule::Fixed { threshold } => returns
            .iter()
            .map(|&r| {
                if r < -threshold {
                    RegimeLabel::Stressed
                } else if r > threshold {
                    RegimeLabel::Rally
                } else {
                    RegimeLabel::Normal
                }
            })
            .collect(),
    }
}

/// Rolling-window corpus from a `T × d` returns matrix.
pub fn ingest_matrix(names: Vec<String>, data: &Matrix, window: WindowSpec, rule: LabelRule) -> Result<LabeledCorpus> {
    let (t, d) = (data.rows(), data.cols());
    if d < 2 {
        return Err(Error::InsufficientDimension { dim: d, required: 2 });
    }
    if window.step == 0 || window.length < d + 2 {
        return Err(Error::InvalidInput(format!(
            "window length {} must be at least dim + 2 = {} and step positive",
            window.length,
            d + 2
        )));
    }
    if t < window.length {
        return Err(Error::InvalidInput(format!("{t} observations is shorter than the window ({})", window.length)));
    }
    let starts = window.starts(t);
    let mut matrices = Vec::with_capacity(starts.len());
    let mut returns = Vec::with_capacity(starts.len());
    let mut repairs = 0;
    let mut repaired_flags = Vec::with_capacity(starts.len());
    for (w, &s) in starts.iter().enumerate() {
        let block = Matrix::from_fn(window.length, d, |i, j| data.get(s + i, j));
        let c = pearson(&block).map_err(|col| Error::DegenerateColumn { asset: names[col].clone(), window: w })?;
        let (c, repaired) = if validate(&c, REPAIR_TOL)?.is_valid {
            (CorrelationMatrix::new(c, REPAIR_TOL)?, false)
        } else {
            repairs += 1;
            (nearest_correlation(&c, REPAIR_TOL, 1000)?, true)
        };
        let pr: f64 = (0..window.length).map(|i| block.row(i).iter().sum::<f64>() / d as f64).sum();
        matrices.push(c);
        returns.push(pr);
        repaired_flags.push(repaired);
    }
    let labels = label_windows(&returns, rule);
    let items = matrices
        .into_iter()
        .enumerate()
        .map(|(w, matrix)| CorpusItem {
            matrix,
            label: labels[w],
            meta: ItemMeta::Window {
                start: starts[w],
                end: starts[w] + window.length,
                portfolio_return: returns[w],
                repaired: repaired_flags[w],
            },
        })
        .collect();
    Ok(LabeledCorpus {
        dim: d,
        items,
        source: CorpusSource::Ingested,
        asset_names: names,
        window: Some(window),
        repairs,
        provenance: None,
    })
}

/// Per-regime generator settings, in [`RegimeLabel::ALL`] order.
pub fn default_regime_params() -> [RegimeParams; 3] {
    RegimeLabel::ALL.map(RegimeParams::defaults)
}

/// `count_per_regime` draws for each regime. Item `k` of regime `r` uses
/// stream `r * count_per_regime + k` of `seed`.
pub fn build_surrogate(count_per_regime: usize, dim: usize, params: &[RegimeParams; 3], seed: Seed) -> Result<LabeledCorpus> {
    if count_per_regime == 0 {
        return Err(Error::InvalidInput("count_per_regime must be at least 1".into()));
    }
    let jobs: Vec<(RegimeLabel, usize)> = RegimeLabel::ALL
        .into_iter()
        .flat_map(|r| (0..count_per_regime).map(move |k| (r, r.index() * count_per_regime + k)))
        .collect();
    let items = jobs
        .into_par_iter()
        .map(|(r, index)| {
            let s = seed.stream(index as u64);
            Ok(CorpusItem {
                matrix: sample_regime(r, dim, &params[r.index()], s)?,
                label: r,
                meta: ItemMeta::Draw { index, seed: s },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledCorpus {
        dim,
        items,
        source: CorpusSource::Surrogate,
        asset_names: Vec::new(),
        window: None,
        repairs: 0,
        provenance: None,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dim: usize,
    count: usize,
    source: CorpusSource,
    labels: Vec<RegimeLabel>,
    items: Vec<ItemMeta>,
    asset_names: Vec<String>,
    window: Option<WindowSpec>,
    repairs: usize,
    payload_sha256: String,
    provenance: Option<Provenance>,
}

fn payload(corpus: &LabeledCorpus) -> Vec<u8> {
    let mut out = Vec::with_capacity(corpus.len() * corpus.dim * corpus.dim * 8);
    for item in &corpus.items {
        out.extend(item.matrix.as_symmetric().to_le_bytes());
    }
    out
}

pub fn write_corpus(corpus: &LabeledCorpus, dir: &Path) -> Result<()> {
    if let Some(bad) = corpus.items.iter().find(|i| i.matrix.dim() != corpus.dim) {
        return Err(Error::InvalidInput(format!("item of dimension {} in a dimension-{} corpus", bad.matrix.dim(), corpus.dim)));
    }
    fs::create_dir_all(dir)?;
    let bytes = payload(corpus);
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dim: corpus.dim,
        count: corpus.len(),
        source: corpus.source,
        labels: corpus.labels(),
        items: corpus.items.iter().map(|i| i.meta.clone()).collect(),
        asset_names: corpus.asset_names.clone(),
        window: corpus.window,
        repairs: corpus.repairs,
        payload_sha256: sha256_hex(&bytes),
        provenance: corpus.provenance.clone(),
    };
    fs::write(dir.join(PAYLOAD_FILE), &bytes)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<LabeledCorpus> {
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or("");
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if format != FORMAT || version != VERSION as u64 {
        return Err(Error::UnsupportedVersion(format!("{format} v{version} (expected {FORMAT} v{VERSION})")));
    }
    let m: Manifest = serde_json::from_value(raw)?;
    let bytes = fs::read(dir.join(PAYLOAD_FILE))?;
    let per = m.dim * m.dim * 8;
    if bytes.len() != m.count * per {
        return Err(Error::CorruptData(format!("payload has {} bytes, expected {}", bytes.len(), m.count * per)));
    }
    if sha256_hex(&bytes) != m.payload_sha256 {
        return Err(Error::CorruptData("payload checksum mismatch".into()));
    }
    if m.labels.len() != m.count || m.items.len() != m.count {
        return Err(Error::CorruptData("manifest label/item counts disagree with count".into()));
    }
    let mut items = Vec::with_capacity(m.count);
    for (k, chunk) in bytes.chunks_exact(per.max(1)).take(m.count).enumerate() {
        let values: Vec<f64> = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        let s = SymmetricMatrix::from_matrix(&Matrix::from_vec(m.dim, m.dim, values)?)
            .map_err(|e| Error::CorruptData(format!("matrix {k}: {e}")))?;
        let matrix = CorrelationMatrix::new(s, 1e-8).map_err(|e| Error::CorruptData(format!("matrix {k}: {e}")))?;
        items.push(CorpusItem { matrix, label: m.labels[k], meta: m.items[k].clone() });
    }
    Ok(LabeledCorpus {
        dim: m.dim,
        items,
        source: m.source,
        asset_names: m.asset_names,
        window: m.window,
        repairs: m.repairs,
        provenance: m.provenance,
    })
}
