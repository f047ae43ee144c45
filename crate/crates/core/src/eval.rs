//! Fidelity of synthetic against empirical matrix distributions: PCA
//! clouds, exact and sliced 2-Wasserstein distances, real/synthetic
//! distance statistics, a feature classifier for conditioning fidelity and
//! per-regime stylized-fact comparisons.

use corrlab_neural::{AdamConfig, AdamState, LayerSpec, Network, Tensor};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::facts::{feature_vector, stylized_report, FeatureVector, DEFAULT_Q_RATIO};
use crate::linalg::{eigh, CorrelationMatrix, SymmetricMatrix};
use crate::rng::Seed;
use crate::samplers::RegimeLabel;

/// Largest cloud handled by the exact assignment solver.
pub const EXACT_LIMIT: usize = 512;
pub const SLICED_PROJECTIONS: usize = 100;
/// Held-out share of the real corpus for the classifier (every fourth item).
pub const HOLDOUT_EVERY: usize = 4;
pub const CLASSIFIER_HIDDEN: usize = 32;
pub const CLASSIFIER_EPOCHS: usize = 200;
pub const CLASSIFIER_BATCH: usize = 32;
pub const CLASSIFIER_LR: f64 = 1e-2;
/// Held-out accuracy below this marks the classifier as weak.
pub const WEAK_CLASSIFIER: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    /// Variances along the two axes.
    pub eigenvalues: [f64; 2],
    pub total_variance: f64,
}

impl PcaBasis {
    pub fn explained_share(&self) -> f64 {
        (self.eigenvalues[0] + self.eigenvalues[1]) / self.total_variance
    }

    pub fn project_vector(&self, v: &[f64]) -> [f64; 2] {
        let c: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        [dot(&c, &self.axes[0]), dot(&c, &self.axes[1])]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud2D {
    pub points: Vec<[f64; 2]>,
}

impl PointCloud2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for p in &self.points {
            s.push_str(&format!("{},{}\n", p[0], p[1]));
        }
        s
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn canonical_sign(v: &mut [f64]) {
    let mut pivot = 0;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = k;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-two principal axes of the vectorized strict lower triangles. Works
/// on the Gram matrix when there are fewer matrices than coordinates.
pub fn fit_pca(reference: &[CorrelationMatrix]) -> Result<PcaBasis> {
    let n = reference.len();
    if n < 2 {
        return Err(Error::DegenerateBasis(format!("need at least 2 reference matrices, got {n}")));
    }
    let dim = reference[0].dim();
    if reference.iter().any(|c| c.dim() != dim) {
        return Err(Error::InvalidInput("reference matrices differ in dimension".into()));
    }
    let rows: Vec<Vec<f64>> = reference.iter().map(|c| c.as_symmetric().lower_triangle()).collect();
    let m = rows[0].len();
    let mut mean = vec![0.0; m];
    for r in &rows {
        for (a, b) in mean.iter_mut().zip(r) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let denom = (n - 1) as f64;
    let total_variance: f64 = centered.iter().flatten().map(|v| v * v).sum::<f64>() / denom;

    let (values, mut axes) = if m <= n {
        let cov = SymmetricMatrix::from_fn(m, |i, j| centered.iter().map(|r| r[i] * r[j]).sum::<f64>() / denom);
        let e = eigh(&cov)?;
        (vec![e.values[m - 1], e.values[m.saturating_sub(2)]], vec![e.vector(m - 1), e.vector(m.saturating_sub(2))])
    } else {
        let gram = SymmetricMatrix::from_fn(n, |i, j| dot(&centered[i], &centered[j]) / denom);
        let e = eigh(&gram)?;
        let mut vals = Vec::new();
        let mut vecs = Vec::new();
        for k in [n - 1, n - 2] {
            let lambda = e.values[k];
            let u = e.vector(k);
            let mut axis = vec![0.0; m];
            for (ui, row) in u.iter().zip(&centered) {
                for (a, x) in axis.iter_mut().zip(row) {
                    *a += ui * x;
                }
            }
            let norm = dot(&axis, &axis).sqrt();
            if norm > 0.0 {
                axis.iter_mut().for_each(|a| *a /= norm);
            }
            vals.push(lambda);
            vecs.push(axis);
        }
        (vals, vecs)
    };
    if m < 2 || !(values[0] > 0.0) || !(values[1] > 1e-12 * values[0]) {
        return Err(Error::DegenerateBasis(format!(
            "reference spread has rank < 2 (top eigenvalues {:?})",
            values
        )));
    }
    for a in axes.iter_mut() {
        canonical_sign(a);
    }
    let second = axes.pop().expect("two axes");
    let first = axes.pop().expect("two axes");
    Ok(PcaBasis { mean, axes: [first, second], eigenvalues: [values[0], values[1]], total_variance })
}

pub fn project(basis: &PcaBasis, set: &[CorrelationMatrix]) -> Result<PointCloud2D> {
    let m = basis.mean.len();
    let mut points = Vec::with_capacity(set.len());
    for c in set {
        let t = c.as_symmetric().lower_triangle();
        if t.len() != m {
            return Err(Error::InvalidInput("matrix dimension differs from the PCA basis".into()));
        }
        points.push(basis.project_vector(&t));
    }
    Ok(PointCloud2D { points })
}

/// Basis from `reference` only; returns the reference cloud and one cloud per other set.
pub fn pca_project(
    reference: &[CorrelationMatrix],
    others: &[&[CorrelationMatrix]],
) -> Result<(PcaBasis, PointCloud2D, Vec<PointCloud2D>)> {
    let basis = fit_pca(reference)?;
    let r = project(&basis, reference)?;
    let o = others.iter().map(|s| project(&basis, s)).collect::<Result<_>>()?;
    Ok((basis, r, o))
}

/// Minimum-cost perfect assignment (shortest augmenting paths with
/// potentials). Returns `assign[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W2 {
    pub distance: f64,
    /// False when the sliced approximation was used.
    pub exact: bool,
}

fn point_hash(p: &[f64; 2]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(p[0].to_le_bytes());
    h.update(p[1].to_le_bytes());
    h.finalize().into()
}

/// First `n` points in SHA-256 order of their coordinates.
fn subsample_points(c: &PointCloud2D, n: usize) -> Vec<[f64; 2]> {
    let mut keyed: Vec<([u8; 32], [f64; 2])> = c.points.iter().map(|p| (point_hash(p), *p)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1[0].total_cmp(&b.1[0])).then(a.1[1].total_cmp(&b.1[1])));
    keyed.into_iter().take(n).map(|(_, p)| p).collect()
}

/// First `n` matrices in SHA-256 order of their bytes.
pub fn subsample_matrices(set: &[CorrelationMatrix], n: usize) -> Vec<CorrelationMatrix> {
    hash_order(set).into_iter().take(n).map(|i| set[i].clone()).collect()
}

/// Indices sorted by SHA-256 of each matrix's little-endian bytes.
pub fn hash_order(set: &[CorrelationMatrix]) -> Vec<usize> {
    let keys: Vec<[u8; 32]> = set.iter().map(|c| Sha256::digest(c.as_symmetric().to_le_bytes()).into()).collect();
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    idx
}

fn sq(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Exact 2-Wasserstein between equal-size clouds, or the sliced estimate
/// above [`EXACT_LIMIT`]. Unequal clouds are cut to the smaller size by
/// hash-ordered subsampling.
pub fn wasserstein2(a: &PointCloud2D, b: &PointCloud2D) -> Result<W2> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    let n = a.len().min(b.len());
    let pa = if a.len() > n { subsample_points(a, n) } else { a.points.clone() };
    let pb = if b.len() > n { subsample_points(b, n) } else { b.points.clone() };
    if n > EXACT_LIMIT {
        let dirs: Vec<Vec<f64>> = (0..SLICED_PROJECTIONS)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / SLICED_PROJECTIONS as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let va: Vec<Vec<f64>> = pa.iter().map(|p| p.to_vec()).collect();
        let vb: Vec<Vec<f64>> = pb.iter().map(|p| p.to_vec()).collect();
        return Ok(W2 { distance: sliced_with(&va, &vb, &dirs), exact: false });
    }
    let cost: Vec<Vec<f64>> = pa.iter().map(|p| pb.iter().map(|q| sq(p, q)).collect()).collect();
    let assign = min_cost_assignment(&cost);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(W2 { distance: (total / n as f64).max(0.0).sqrt(), exact: true })
}

fn sliced_with(a: &[Vec<f64>], b: &[Vec<f64>], dirs: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for d in dirs {
        let mut x: Vec<f64> = a.iter().map(|p| dot(p, d)).collect();
        let mut y: Vec<f64> = b.iter().map(|p| dot(p, d)).collect();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        acc += x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / n as f64;
    }
    (acc / dirs.len() as f64).sqrt()
}

/// Sliced 2-Wasserstein between equal-size sets of vectors, with
/// `projections` Gaussian directions drawn from `seed`.
pub fn sliced_wasserstein(a: &[Vec<f64>], b: &[Vec<f64>], projections: usize, seed: Seed) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() || projections == 0 {
        return Err(Error::InvalidInput("sliced distance needs equal, non-empty sets".into()));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|v| v.len() != d) {
        return Err(Error::InvalidInput("vectors differ in length".into()));
    }
    let mut rng = seed.rng();
    let dirs: Vec<Vec<f64>> = (0..projections)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = dot(&v, &v).sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    Ok(sliced_with(a, b, &dirs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mu_e: f64,
    pub sigma_e: f64,
    pub mu_g: f64,
    pub sigma_g: f64,
    pub max_within: f64,
    pub min_between: f64,
    pub exact: bool,
}

impl DistanceStats {
    pub fn ratio(&self) -> f64 {
        self.mu_g / self.mu_e
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Real–real (`μ_E`, `σ_E`) and real–synthetic (`μ_G`, `σ_G`) distance
/// summaries; standard deviations are population ones.
pub fn distance_stats(real: &[PointCloud2D], synth: &[PointCloud2D]) -> Result<DistanceStats> {
    if real.len() < 2 || synth.is_empty() {
        return Err(Error::InvalidInput("need at least two real sets and one synthetic set".into()));
    }
    let within_pairs: Vec<(usize, usize)> =
        (0..real.len()).flat_map(|i| (i + 1..real.len()).map(move |j| (i, j))).collect();
    let within: Vec<W2> = within_pairs.par_iter().map(|&(i, j)| wasserstein2(&real[i], &real[j])).collect::<Result<_>>()?;
    let between_pairs: Vec<(usize, usize)> =
        (0..real.len()).flat_map(|i| (0..synth.len()).map(move |j| (i, j))).collect();
    let between: Vec<W2> =
        between_pairs.par_iter().map(|&(i, j)| wasserstein2(&real[i], &synth[j])).collect::<Result<_>>()?;
    let w: Vec<f64> = within.iter().map(|d| d.distance).collect();
    let b: Vec<f64> = between.iter().map(|d| d.distance).collect();
    let (mu_e, sigma_e) = mean_std(&w);
    let (mu_g, sigma_g) = mean_std(&b);
    Ok(DistanceStats {
        mu_e,
        sigma_e,
        mu_g,
        sigma_g,
        max_within: w.iter().copied().fold(0.0, f64::max),
        min_between: b.iter().copied().fold(f64::INFINITY, f64::min),
        exact: within.iter().chain(&between).all(|d| d.exact),
    })
}

/// Splits a corpus into `k` label-stratified sets: within each label, items
/// in hash order are dealt round-robin.
pub fn stratified_sets(corpus: &LabeledCorpus, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one set".into()));
    }
    let matrices: Vec<CorrelationMatrix> = corpus.items.iter().map(|i| i.matrix.clone()).collect();
    let order = hash_order(&matrices);
    let mut sets = vec![Vec::new(); k];
    for label in RegimeLabel::ALL {
        for (slot, &i) in order.iter().filter(|&&i| corpus.items[i].label == label).enumerate() {
            sets[slot % k].push(i);
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]` in regime order.
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: RegimeLabel, predicted: RegimeLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> [u64; 3] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        (0..3).map(|i| self.counts[i][i]).sum::<u64>() as f64 / t as f64
    }
}

/// Softmax classifier `Dense(8, 32) → ReLU → Dense(32, 3)` on standardized
/// feature vectors.
#[derive(Debug, Clone)]
pub struct FeatureClassifier {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub net: Network<f64>,
}

impl FeatureClassifier {
    fn standardize(&self, x: &[f64; FeatureVector::LEN]) -> Vec<f64> {
        x.iter().zip(self.means.iter().zip(&self.scales)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn predict(&self, x: &[f64; FeatureVector::LEN]) -> Result<RegimeLabel> {
        let t = Tensor::from_vec(&[1, FeatureVector::LEN], self.standardize(x))?;
        let out = self.net.predict(&t)?;
        let logits = out.data();
        let mut best = 0;
        for k in 1..3 {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        Ok(RegimeLabel::from_index(best).expect("three classes"))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::MIN, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn train_classifier(data: &[([f64; FeatureVector::LEN], RegimeLabel)], seed: Seed) -> Result<FeatureClassifier> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no training items".into()));
    }
    let k = FeatureVector::LEN;
    let n = data.len() as f64;
    let mut means = vec![0.0; k];
    let mut scales = vec![0.0; k];
    for j in 0..k {
        means[j] = data.iter().map(|(x, _)| x[j]).sum::<f64>() / n;
        let v = data.iter().map(|(x, _)| (x[j] - means[j]).powi(2)).sum::<f64>() / n;
        scales[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let net = Network::<f64>::new(
        &[k],
        vec![
            LayerSpec::Dense { input: k, output: CLASSIFIER_HIDDEN },
            LayerSpec::ReLU,
            LayerSpec::Dense { input: CLASSIFIER_HIDDEN, output: 3 },
        ],
        seed.named("classifier-init").0,
    )?;
    let mut clf = FeatureClassifier { means, scales, net };
    let xs: Vec<Vec<f64>> = data.iter().map(|(x, _)| clf.standardize(x)).collect();
    let mut opt = AdamState::new(AdamConfig { lr: CLASSIFIER_LR, ..AdamConfig::default() }, &clf.net)?;
    let shuffle_seed = seed.named("classifier-shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..CLASSIFIER_EPOCHS {
        order.shuffle(&mut shuffle_seed.stream(epoch as u64).rng());
        for batch in order.chunks(CLASSIFIER_BATCH) {
            let b = batch.len();
            let input = Tensor::from_vec(&[b, k], batch.iter().flat_map(|&i| xs[i].iter().copied()).collect())?;
            let (out, cache) = clf.net.forward(&input)?;
            let mut grad = Vec::with_capacity(b * 3);
            for (row, &i) in out.data().chunks_exact(3).zip(batch) {
                let p = softmax(row);
                for (c, pc) in p.iter().enumerate() {
                    let y = if c == data[i].1.index() { 1.0 } else { 0.0 };
                    grad.push((pc - y) / b as f64);
                }
            }
            let g = clf.net.backward(&cache, &Tensor::from_vec(&[b, 3], grad)?)?;
            opt.step(&mut clf.net, &g.params)?;
        }
    }
    Ok(clf)
}

/// Train/held-out indices: within each label, every
/// [`HOLDOUT_EVERY`]-th item in hash order is held out.
pub fn holdout_split(corpus: &LabeledCorpus) -> (Vec<usize>, Vec<usize>) {
    let matrices: Vec<CorrelationMatrix> = corpus.items.iter().map(|i| i.matrix.clone()).collect();
    let order = hash_order(&matrices);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for label in RegimeLabel::ALL {
        for (slot, &i) in order.iter().filter(|&&i| corpus.items[i].label == label).enumerate() {
            if slot % HOLDOUT_EVERY == HOLDOUT_EVERY - 1 {
                held.push(i);
            } else {
                train.push(i);
            }
        }
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Feature vectors in item order; items whose features are undefined are `None`.
pub fn corpus_features(corpus: &LabeledCorpus) -> Vec<Option<[f64; FeatureVector::LEN]>> {
    corpus.items.par_iter().map(|it| feature_vector(&it.matrix).ok().map(|f| f.to_array())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub real_holdout: ConfusionMatrix,
    pub real_holdout_accuracy: f64,
    pub synthetic: ConfusionMatrix,
    pub accuracy: f64,
    /// Held-out accuracy below [`WEAK_CLASSIFIER`]; fidelity numbers are then unreliable.
    pub weak_classifier: bool,
    pub train_size: usize,
    pub synthetic_skipped: usize,
}

fn confusion(clf: &FeatureClassifier, items: &[([f64; FeatureVector::LEN], RegimeLabel)]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for (x, l) in items {
        cm.add(*l, clf.predict(x)?);
    }
    Ok(cm)
}

/// Classifier trained on the real corpus (minus a held-out split) and
/// applied to synthetic items against their conditioning labels.
pub fn classifier_fidelity(real: &LabeledCorpus, synth: &LabeledCorpus, seed: Seed) -> Result<FidelityReport> {
    if real.dim != synth.dim {
        return Err(Error::InvalidInput(format!("corpus dims differ: {} vs {}", real.dim, synth.dim)));
    }
    for l in RegimeLabel::ALL {
        if real.count(l) == 0 {
            return Err(Error::InvalidInput(format!("real corpus has no '{l}' items")));
        }
    }
    let feats = corpus_features(real);
    let (train_idx, held_idx) = holdout_split(real);
    let pick = |idx: &[usize]| -> Vec<([f64; FeatureVector::LEN], RegimeLabel)> {
        idx.iter().filter_map(|&i| feats[i].map(|f| (f, real.items[i].label))).collect()
    };
    let train = pick(&train_idx);
    let held = pick(&held_idx);
    let clf = train_classifier(&train, seed)?;
    let real_holdout = confusion(&clf, &held)?;
    let sfeats = corpus_features(synth);
    let synth_items: Vec<_> =
        sfeats.iter().zip(&synth.items).filter_map(|(f, it)| f.map(|f| (f, it.label))).collect();
    let synthetic = confusion(&clf, &synth_items)?;
    Ok(FidelityReport {
        real_holdout_accuracy: real_holdout.accuracy(),
        weak_classifier: real_holdout.accuracy() < WEAK_CLASSIFIER,
        real_holdout,
        accuracy: synthetic.accuracy(),
        synthetic,
        train_size: train.len(),
        synthetic_skipped: synth.len() - synth_items.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FactMeans {
    pub n: usize,
    pub sf1_mean_offdiag: f64,
    pub sf2_top_eig_share: f64,
    pub sf3_outlier_eig_fraction: f64,
    pub sf4_first_evec_sign_consistency: f64,
    pub sf5_cophenetic_coeff: f64,
    pub sf6_mst_degree_tail_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactComparison {
    pub regime: RegimeLabel,
    pub real: FactMeans,
    pub synthetic: FactMeans,
}

pub fn fact_means(set: &[&CorrelationMatrix]) -> Result<FactMeans> {
    let reports = set.par_iter().map(|c| stylized_report(c, DEFAULT_Q_RATIO)).collect::<Result<Vec<_>>>()?;
    let n = reports.len();
    if n == 0 {
        return Ok(FactMeans::default());
    }
    let avg = |f: &dyn Fn(&crate::facts::StylizedFactReport) -> f64| reports.iter().map(f).sum::<f64>() / n as f64;
    Ok(FactMeans {
        n,
        sf1_mean_offdiag: avg(&|r| r.sf1_mean_offdiag),
        sf2_top_eig_share: avg(&|r| r.sf2_top_eig_share),
        sf3_outlier_eig_fraction: avg(&|r| r.sf3_outlier_eig_fraction),
        sf4_first_evec_sign_consistency: avg(&|r| r.sf4_first_evec_sign_consistency),
        sf5_cophenetic_coeff: avg(&|r| r.sf5_cophenetic_coeff),
        sf6_mst_degree_tail_exponent: avg(&|r| r.sf6_mst_degree_tail_exponent),
    })
}

pub fn compare_facts(real: &LabeledCorpus, synth: &LabeledCorpus) -> Result<Vec<FactComparison>> {
    RegimeLabel::ALL
        .iter()
        .map(|&regime| {
            Ok(FactComparison {
                regime,
                real: fact_means(&real.by_label(regime))?,
                synthetic: fact_means(&synth.by_label(regime))?,
            })
        })
        .collect()
}
