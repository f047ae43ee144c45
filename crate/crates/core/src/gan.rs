//! Conditional GAN over correlation matrices.
//!
//! The generator maps `(noise, one-hot regime)` to the strict lower triangle
//! of a correlation matrix through Tanh, so raw outputs are symmetric with
//! unit diagonal and entries in (−1, 1); only positive semidefiniteness is
//! left to the projection step at sampling time. The discriminator scores
//! `(triangle, one-hot regime)` pairs. In the convolutional variant the
//! generator emits a `dim × dim` Tanh image whose strict lower triangle is
//! read off, and the discriminator sees the symmetric matrix as an image
//! with three constant label planes.

use std::fs;
use std::path::Path;

use corrlab_neural::checkpoint as nnck;
use corrlab_neural::{AdamConfig, AdamState, LayerSpec, Network, Tensor};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::linalg::{nearest_correlation, CorrelationMatrix, SymmetricMatrix};
use crate::mc::MatrixSource;
use crate::provenance::Provenance;
use crate::rng::{Rng, Seed};
use crate::samplers::RegimeLabel;

pub const FORMAT: &str = "CGAN";
pub const VERSION: u32 = 1;
pub const GAN_FILE: &str = "gan.json";
pub const GENERATOR_DIR: &str = "generator";
pub const DISCRIMINATOR_DIR: &str = "discriminator";
pub const ALLOWED_DIMS: [usize; 3] = [16, 32, 80];
pub const REGIMES: usize = 3;
pub const LEAKY_ALPHA: f64 = 0.2;
pub const ADAM_BETA1: f64 = 0.5;
pub const ADAM_BETA2: f64 = 0.999;
/// Inter-regime sf1 gap below which an epoch counts towards mode collapse.
pub const COLLAPSE_GAP: f64 = 0.01;
pub const COLLAPSE_EPOCHS: usize = 50;
pub const MONITOR_SAMPLES: usize = 32;
pub const PROJECTION_TOL: f64 = 1e-10;
pub const PROJECTION_MAX_ITER: usize = 2000;
const PROB_EPS: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Dense,
    Conv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub dim: usize,
    pub noise_dim: usize,
    pub regime_count: usize,
    pub arch: Arch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub d_steps_per_g: usize,
    pub seed: Seed,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            dim: 16,
            noise_dim: 64,
            regime_count: REGIMES,
            arch: Arch::Dense,
            epochs: 300,
            batch_size: 32,
            lr_g: 2e-4,
            lr_d: 2e-4,
            d_steps_per_g: 1,
            seed: Seed(0),
        }
    }
}

impl GanConfig {
    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !ALLOWED_DIMS.contains(&self.dim) {
            return fail(format!("dim must be one of {ALLOWED_DIMS:?}, got {}", self.dim));
        }
        if self.arch == Arch::Conv && self.dim % 4 != 0 {
            return fail(format!("conv architecture needs dim divisible by 4, got {}", self.dim));
        }
        if self.regime_count != REGIMES {
            return fail(format!("regime_count must be {REGIMES}"));
        }
        if self.noise_dim == 0 {
            return fail("noise_dim must be positive".into());
        }
        if self.batch_size < 8 {
            return fail(format!("batch_size must be at least 8, got {}", self.batch_size));
        }
        if self.d_steps_per_g == 0 {
            return fail("d_steps_per_g must be at least 1".into());
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn triangle_len(&self) -> usize {
        self.dim * (self.dim - 1) / 2
    }

    fn same_shape(&self, other: &GanConfig) -> bool {
        self.dim == other.dim && self.noise_dim == other.noise_dim && self.arch == other.arch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub g_loss: f64,
    pub d_loss: f64,
    /// Mean off-diagonal entry of raw samples per regime (stressed, normal, rally).
    pub sf1_by_regime: [f64; 3],
}

impl EpochStats {
    pub fn sf1_gap(&self) -> f64 {
        let max = self.sf1_by_regime.iter().copied().fold(f64::MIN, f64::max);
        let min = self.sf1_by_regime.iter().copied().fold(f64::MAX, f64::min);
        max - min
    }
}

#[derive(Debug, Clone)]
pub struct GanCheckpoint {
    pub config: GanConfig,
    pub generator: Network<f32>,
    pub discriminator: Network<f32>,
    pub epoch: usize,
    pub loss_history: Vec<EpochStats>,
    /// Set once the inter-regime sf1 gap stayed below [`COLLAPSE_GAP`] for
    /// [`COLLAPSE_EPOCHS`] consecutive epochs.
    pub mode_collapse: bool,
    pub g_steps: u64,
    pub d_steps: u64,
}

fn generator_layers(c: &GanConfig) -> Vec<LayerSpec> {
    let input = c.noise_dim + REGIMES;
    let leaky = || LayerSpec::LeakyReLU { alpha: LEAKY_ALPHA };
    match c.arch {
        Arch::Dense => vec![
            LayerSpec::Dense { input, output: 256 },
            leaky(),
            LayerSpec::Dense { input: 256, output: 256 },
            leaky(),
            LayerSpec::Dense { input: 256, output: c.triangle_len() },
            LayerSpec::Tanh,
        ],
        Arch::Conv => {
            let s = c.dim / 4;
            vec![
                LayerSpec::Dense { input, output: 64 * s * s },
                leaky(),
                LayerSpec::Reshape { shape: vec![64, s, s] },
                LayerSpec::ConvTranspose2D { in_ch: 64, out_ch: 32, kernel: 4, stride: 2, pad: 1 },
                leaky(),
                LayerSpec::ConvTranspose2D { in_ch: 32, out_ch: 1, kernel: 4, stride: 2, pad: 1 },
                LayerSpec::Tanh,
                LayerSpec::Flatten,
            ]
        }
    }
}

fn discriminator_spec(c: &GanConfig) -> (Vec<usize>, Vec<LayerSpec>) {
    let leaky = || LayerSpec::LeakyReLU { alpha: LEAKY_ALPHA };
    match c.arch {
        Arch::Dense => (
            vec![c.triangle_len() + REGIMES],
            vec![
                LayerSpec::Dense { input: c.triangle_len() + REGIMES, output: 256 },
                leaky(),
                LayerSpec::Dense { input: 256, output: 128 },
                leaky(),
                LayerSpec::Dense { input: 128, output: 1 },
                LayerSpec::Sigmoid,
            ],
        ),
        Arch::Conv => {
            let s = c.dim / 4;
            (
                vec![1 + REGIMES, c.dim, c.dim],
                vec![
                    LayerSpec::Conv2D { in_ch: 1 + REGIMES, out_ch: 16, kernel: 4, stride: 2, pad: 1 },
                    leaky(),
                    LayerSpec::Conv2D { in_ch: 16, out_ch: 32, kernel: 4, stride: 2, pad: 1 },
                    leaky(),
                    LayerSpec::Flatten,
                    LayerSpec::Dense { input: 32 * s * s, output: 1 },
                    LayerSpec::Sigmoid,
                ],
            )
        }
    }
}

/// Untrained generator/discriminator pair.
pub fn build(config: &GanConfig) -> Result<GanCheckpoint> {
    config.check()?;
    let generator = Network::new(
        &[config.noise_dim + REGIMES],
        generator_layers(config),
        config.seed.named("generator").0,
    )?;
    let (d_in, d_layers) = discriminator_spec(config);
    let discriminator = Network::new(&d_in, d_layers, config.seed.named("discriminator").0)?;
    Ok(GanCheckpoint {
        config: config.clone(),
        generator,
        discriminator,
        epoch: 0,
        loss_history: Vec::new(),
        mode_collapse: false,
        g_steps: 0,
        d_steps: 0,
    })
}

fn one_hot(label: RegimeLabel) -> [f32; REGIMES] {
    let mut v = [0.0; REGIMES];
    v[label.index()] = 1.0;
    v
}

fn generator_input(noise: &[f32], labels: &[RegimeLabel], nz: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(labels.len() * (nz + REGIMES));
    for (z, &l) in noise.chunks_exact(nz).zip(labels) {
        data.extend_from_slice(z);
        data.extend_from_slice(&one_hot(l));
    }
    Ok(Tensor::from_vec(&[labels.len(), nz + REGIMES], data)?)
}

/// Strict-lower-triangle positions `(i, j)`, `i > j`, in storage order.
fn triangle_positions(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..dim).flat_map(|i| (0..i).map(move |j| (i, j)))
}

impl GanCheckpoint {
    pub fn is_trained(&self) -> bool {
        self.epoch > 0
    }

    fn noise(&self, rng: &mut Rng, count: usize) -> Vec<f32> {
        (0..count * self.config.noise_dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
    }

    /// Generator output reduced to triangles, `batch × m` row-major.
    fn triangles(&self, out: &Tensor<f32>) -> Vec<f32> {
        match self.config.arch {
            Arch::Dense => out.data().to_vec(),
            Arch::Conv => {
                let d = self.config.dim;
                out.data()
                    .chunks_exact(d * d)
                    .flat_map(|img| triangle_positions(d).map(move |(i, j)| img[i * d + j]))
                    .collect()
            }
        }
    }

    /// Gradient with respect to triangles mapped back onto the generator output.
    fn triangle_grad_to_output(&self, g: &[f32], out_shape: &[usize]) -> Result<Tensor<f32>> {
        match self.config.arch {
            Arch::Dense => Ok(Tensor::from_vec(out_shape, g.to_vec())?),
            Arch::Conv => {
                let d = self.config.dim;
                let m = self.config.triangle_len();
                let mut data = vec![0.0; out_shape.iter().product()];
                for (img, tri) in data.chunks_exact_mut(d * d).zip(g.chunks_exact(m)) {
                    for ((i, j), v) in triangle_positions(d).zip(tri) {
                        img[i * d + j] = *v;
                    }
                }
                Ok(Tensor::from_vec(out_shape, data)?)
            }
        }
    }

    fn discriminator_input(&self, tri: &[f32], labels: &[RegimeLabel]) -> Result<Tensor<f32>> {
        let m = self.config.triangle_len();
        let b = labels.len();
        match self.config.arch {
            Arch::Dense => {
                let mut data = Vec::with_capacity(b * (m + REGIMES));
                for (t, &l) in tri.chunks_exact(m).zip(labels) {
                    data.extend_from_slice(t);
                    data.extend_from_slice(&one_hot(l));
                }
                Ok(Tensor::from_vec(&[b, m + REGIMES], data)?)
            }
            Arch::Conv => {
                let d = self.config.dim;
                let plane = d * d;
                let mut data = vec![0.0f32; b * (1 + REGIMES) * plane];
                for ((item, t), &l) in data.chunks_exact_mut((1 + REGIMES) * plane).zip(tri.chunks_exact(m)).zip(labels) {
                    for k in 0..d {
                        item[k * d + k] = 1.0;
                    }
                    for ((i, j), v) in triangle_positions(d).zip(t) {
                        item[i * d + j] = *v;
                        item[j * d + i] = *v;
                    }
                    item[(1 + l.index()) * plane..(2 + l.index()) * plane].fill(1.0);
                }
                Ok(Tensor::from_vec(&[b, 1 + REGIMES, d, d], data)?)
            }
        }
    }

    fn discriminator_grad_to_triangle(&self, g: &Tensor<f32>) -> Vec<f32> {
        let m = self.config.triangle_len();
        match self.config.arch {
            Arch::Dense => g.data().chunks_exact(m + REGIMES).flat_map(|r| r[..m].to_vec()).collect(),
            Arch::Conv => {
                let d = self.config.dim;
                g.data()
                    .chunks_exact((1 + REGIMES) * d * d)
                    .flat_map(|item| triangle_positions(d).map(move |(i, j)| item[i * d + j] + item[j * d + i]))
                    .collect()
            }
        }
    }

    /// Raw triangles for the given noise and labels.
    fn generate_triangles(&self, noise: &[f32], labels: &[RegimeLabel]) -> Result<Vec<f32>> {
        let out = self.generator.predict(&generator_input(noise, labels, self.config.noise_dim)?)?;
        Ok(self.triangles(&out))
    }

    fn score(&self, tri: &[f32], labels: &[RegimeLabel]) -> Result<Vec<f32>> {
        Ok(self.discriminator.predict(&self.discriminator_input(tri, labels)?)?.into_data())
    }
}

fn bce_terms(p: &[f32], real: bool, batch: usize) -> (f64, Vec<f32>) {
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for &v in p {
        let v = v.clamp(PROB_EPS, 1.0 - PROB_EPS);
        if real {
            loss -= (v as f64).ln();
            grad.push(-1.0 / (v * batch as f32));
        } else {
            loss -= (1.0 - v as f64).ln();
            grad.push(1.0 / ((1.0 - v) * batch as f32));
        }
    }
    (loss / batch as f64, grad)
}

fn diverged(epoch: usize, reason: String, stable: &GanCheckpoint) -> Error {
    Error::TrainingDiverged { epoch, reason, last_stable: Box::new(stable.clone()) }
}

fn adam(lr: f64) -> AdamConfig {
    AdamConfig { lr, beta1: ADAM_BETA1, beta2: ADAM_BETA2, epsilon: 1e-8 }
}

/// Alternating non-saturating updates: `d_steps_per_g` discriminator steps,
/// then one generator step. Runs `config.epochs` further epochs on top of
/// `ckpt`; shape fields of `config` must match the checkpoint.
pub fn train(ckpt: GanCheckpoint, corpus: &LabeledCorpus, config: &GanConfig) -> Result<GanCheckpoint> {
    config.check()?;
    if !config.same_shape(&ckpt.config) {
        return Err(Error::Config("training config does not match the checkpoint architecture".into()));
    }
    if corpus.dim != config.dim {
        return Err(Error::Config(format!("corpus dim {} differs from model dim {}", corpus.dim, config.dim)));
    }
    for l in RegimeLabel::ALL {
        if corpus.count(l) == 0 {
            return Err(Error::Config(format!("corpus has no '{l}' items")));
        }
    }
    let m = config.triangle_len();
    let real: Vec<f32> = corpus
        .items
        .iter()
        .flat_map(|it| it.matrix.as_symmetric().lower_triangle().into_iter().map(|v| v as f32))
        .collect();
    let labels: Vec<RegimeLabel> = corpus.labels();

    let mut state = ckpt;
    state.config = GanConfig { dim: state.config.dim, noise_dim: state.config.noise_dim, arch: state.config.arch, ..config.clone() };
    let mut opt_g = AdamState::new(adam(config.lr_g), &state.generator)?;
    let mut opt_d = AdamState::new(adam(config.lr_d), &state.discriminator)?;
    let train_seed = config.seed.named("train");
    let monitor_seed = config.seed.named("monitor");
    let mut low_gap_run = state
        .loss_history
        .iter()
        .rev()
        .take_while(|s| s.sf1_gap() < COLLAPSE_GAP)
        .count();

    for _ in 0..config.epochs {
        let stable = state.clone();
        let epoch = state.epoch + 1;
        let mut rng = train_seed.stream(epoch as u64).rng();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut rng);
        let (mut g_sum, mut d_sum, mut g_n, mut d_n) = (0.0, 0.0, 0usize, 0usize);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let b = batch.len();
            let blabels: Vec<RegimeLabel> = batch.iter().map(|&i| labels[i]).collect();
            let btri: Vec<f32> = batch.iter().flat_map(|&i| real[i * m..(i + 1) * m].iter().copied()).collect();

            // discriminator
            let noise = state.noise(&mut rng, b);
            let fake = state.generate_triangles(&noise, &blabels)?;
            let d = &state.discriminator;
            let (p_real, c_real) = d.forward(&state.discriminator_input(&btri, &blabels)?)?;
            let (p_fake, c_fake) = d.forward(&state.discriminator_input(&fake, &blabels)?)?;
            let (l_real, g_real) = bce_terms(p_real.data(), true, b);
            let (l_fake, g_fake) = bce_terms(p_fake.data(), false, b);
            let d_loss = l_real + l_fake;
            if !d_loss.is_finite() {
                return Err(diverged(epoch, format!("discriminator loss {d_loss}"), &stable));
            }
            let mut grads = d.backward(&c_real, &Tensor::from_vec(&[b, 1], g_real)?)?.params;
            let gf = d.backward(&c_fake, &Tensor::from_vec(&[b, 1], g_fake)?)?.params;
            for (a, f) in grads.iter_mut().zip(&gf) {
                for (x, y) in a.data_mut().iter_mut().zip(f.data()) {
                    *x += *y;
                }
            }
            opt_d
                .step(&mut state.discriminator, &grads)
                .map_err(|e| diverged(epoch, e.to_string(), &stable))?;
            state.d_steps += 1;
            d_sum += d_loss;
            d_n += 1;

            if (step + 1) % config.d_steps_per_g != 0 {
                continue;
            }
            // generator: maximize log D(G(z, y), y)
            let noise = state.noise(&mut rng, b);
            let (out, c_gen) = state.generator.forward(&generator_input(&noise, &blabels, config.noise_dim)?)?;
            let tri = state.triangles(&out);
            let (p, c_disc) = state.discriminator.forward(&state.discriminator_input(&tri, &blabels)?)?;
            let (g_loss, g_out) = bce_terms(p.data(), true, b);
            if !g_loss.is_finite() {
                return Err(diverged(epoch, format!("generator loss {g_loss}"), &stable));
            }
            let g_in = state.discriminator.input_gradient(&c_disc, &Tensor::from_vec(&[b, 1], g_out)?)?;
            let g_tri = state.discriminator_grad_to_triangle(&g_in);
            let g_gen_out = state.triangle_grad_to_output(&g_tri, out.shape())?;
            let gg = state.generator.backward(&c_gen, &g_gen_out)?.params;
            opt_g
                .step(&mut state.generator, &gg)
                .map_err(|e| diverged(epoch, e.to_string(), &stable))?;
            state.g_steps += 1;
            g_sum += g_loss;
            g_n += 1;
        }

        let sf1 = monitor_sf1(&state, monitor_seed)?;
        let stats = EpochStats {
            epoch,
            g_loss: if g_n > 0 { g_sum / g_n as f64 } else { f64::NAN },
            d_loss: d_sum / d_n.max(1) as f64,
            sf1_by_regime: sf1,
        };
        if !stats.d_loss.is_finite() || sf1.iter().any(|v| !v.is_finite()) {
            return Err(diverged(epoch, "non-finite epoch statistics".into(), &stable));
        }
        low_gap_run = if stats.sf1_gap() < COLLAPSE_GAP { low_gap_run + 1 } else { 0 };
        if low_gap_run >= COLLAPSE_EPOCHS {
            state.mode_collapse = true;
        }
        state.loss_history.push(stats);
        state.epoch = epoch;
    }
    Ok(state)
}

fn monitor_sf1(state: &GanCheckpoint, seed: Seed) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    let mut rng = seed.rng();
    let noise = state.noise(&mut rng, MONITOR_SAMPLES);
    for r in RegimeLabel::ALL {
        let tri = state.generate_triangles(&noise, &[r; MONITOR_SAMPLES])?;
        out[r.index()] = tri.iter().map(|&v| v as f64).sum::<f64>() / tri.len() as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanSample {
    /// Symmetric unit-diagonal generator output.
    pub raw: SymmetricMatrix,
    pub projected: Option<CorrelationMatrix>,
    /// Frobenius distance from `raw` to `projected`.
    pub displacement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub regime: RegimeLabel,
    pub samples: Vec<GanSample>,
    pub warnings: Vec<String>,
}

impl SampleBatch {
    pub fn matrices(&self) -> Vec<CorrelationMatrix> {
        self.samples.iter().filter_map(|s| s.projected.clone()).collect()
    }
}

const SAMPLE_CHUNK: usize = 64;

/// Draws `count` matrices for `regime`. Item `i` uses noise from
/// `seed.stream(i)`, so results do not depend on chunking or threads.
pub fn sample(ckpt: &GanCheckpoint, regime: RegimeLabel, count: usize, seed: Seed, project: bool) -> Result<SampleBatch> {
    let dim = ckpt.config.dim;
    let m = ckpt.config.triangle_len();
    let starts: Vec<usize> = (0..count).step_by(SAMPLE_CHUNK).collect();
    let chunks: Vec<Vec<GanSample>> = starts
        .par_iter()
        .map(|&start| -> Result<Vec<GanSample>> {
            let n = SAMPLE_CHUNK.min(count - start);
            let noise: Vec<f32> = (start..start + n)
                .flat_map(|i| ckpt.noise(&mut seed.stream(i as u64).rng(), 1))
                .collect();
            let tri = ckpt.generate_triangles(&noise, &vec![regime; n])?;
            tri.chunks_exact(m)
                .map(|t| {
                    let t64: Vec<f64> = t.iter().map(|&v| v as f64).collect();
                    if t64.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NumericalFailure("generator produced a non-finite entry".into()));
                    }
                    let raw = SymmetricMatrix::from_lower_triangle(dim, &t64, 1.0)?;
                    if !project {
                        return Ok(GanSample { raw, projected: None, displacement: None });
                    }
                    let c = nearest_correlation(&raw, PROJECTION_TOL, PROJECTION_MAX_ITER)?;
                    let displacement = raw.frobenius_distance(c.as_symmetric());
                    Ok(GanSample { raw, projected: Some(c), displacement: Some(displacement) })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    if !ckpt.is_trained() {
        warnings.push("UntrainedModel: sampling from a checkpoint that has not been trained".into());
    }
    if ckpt.mode_collapse {
        warnings.push("ModeCollapse: inter-regime sf1 gap stayed below threshold during training".into());
    }
    Ok(SampleBatch { regime, samples: chunks.into_iter().flatten().collect(), warnings })
}

/// Mean Frobenius distance between raw outputs for two regimes under the
/// same noise.
pub fn conditioning_sensitivity(ckpt: &GanCheckpoint, a: RegimeLabel, b: RegimeLabel, count: usize, seed: Seed) -> Result<f64> {
    let x = sample(ckpt, a, count, seed, false)?;
    let y = sample(ckpt, b, count, seed, false)?;
    Ok(x.samples.iter().zip(&y.samples).map(|(p, q)| p.raw.frobenius_distance(&q.raw)).sum::<f64>() / count as f64)
}

/// Fraction of correct real/fake calls at threshold ½ on the given real
/// items and as many generated ones with the same labels.
pub fn discriminator_accuracy(ckpt: &GanCheckpoint, real: &[(CorrelationMatrix, RegimeLabel)], seed: Seed) -> Result<f64> {
    if real.is_empty() {
        return Err(Error::InvalidInput("no real items".into()));
    }
    let tri: Vec<f32> = real
        .iter()
        .flat_map(|(c, _)| c.as_symmetric().lower_triangle().into_iter().map(|v| v as f32))
        .collect();
    let labels: Vec<RegimeLabel> = real.iter().map(|(_, l)| *l).collect();
    let noise = ckpt.noise(&mut seed.rng(), labels.len());
    let fake = ckpt.generate_triangles(&noise, &labels)?;
    let pr = ckpt.score(&tri, &labels)?;
    let pf = ckpt.score(&fake, &labels)?;
    let correct = pr.iter().filter(|&&p| p >= 0.5).count() + pf.iter().filter(|&&p| p < 0.5).count();
    Ok(correct as f64 / (2 * labels.len()) as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GanManifest {
    format: String,
    version: u32,
    config: GanConfig,
    epoch: usize,
    loss_history: Vec<EpochStats>,
    mode_collapse: bool,
    g_steps: u64,
    d_steps: u64,
    provenance: Option<Provenance>,
}

pub fn save(ckpt: &GanCheckpoint, dir: &Path, provenance: Option<&Provenance>) -> Result<()> {
    fs::create_dir_all(dir)?;
    nnck::save(&dir.join(GENERATOR_DIR), &ckpt.generator, Some(adam(ckpt.config.lr_g)), ckpt.g_steps, serde_json::json!({"role": "generator"}))?;
    nnck::save(
        &dir.join(DISCRIMINATOR_DIR),
        &ckpt.discriminator,
        Some(adam(ckpt.config.lr_d)),
        ckpt.d_steps,
        serde_json::json!({"role": "discriminator"}),
    )?;
    let manifest = GanManifest {
        format: FORMAT.into(),
        version: VERSION,
        config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        loss_history: ckpt.loss_history.clone(),
        mode_collapse: ckpt.mode_collapse,
        g_steps: ckpt.g_steps,
        d_steps: ckpt.d_steps,
        provenance: provenance.cloned(),
    };
    fs::write(dir.join(GAN_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(GanCheckpoint, Option<Provenance>)> {
    let text = fs::read(dir.join(GAN_FILE))?;
    let manifest: GanManifest =
        serde_json::from_slice(&text).map_err(|e| Error::CorruptData(format!("{GAN_FILE}: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::CorruptData(format!("not a GAN checkpoint (format '{}')", manifest.format)));
    }
    if manifest.version != VERSION {
        return Err(Error::UnsupportedVersion(format!("{} v{}", manifest.format, manifest.version)));
    }
    manifest.config.check()?;
    let (generator, _) = nnck::load(&dir.join(GENERATOR_DIR))?;
    let (discriminator, _) = nnck::load(&dir.join(DISCRIMINATOR_DIR))?;
    let fresh = build(&manifest.config)?;
    if generator.layers() != fresh.generator.layers() || discriminator.layers() != fresh.discriminator.layers() {
        return Err(Error::CorruptData("network layout does not match the stored config".into()));
    }
    Ok((
        GanCheckpoint {
            config: manifest.config,
            generator,
            discriminator,
            epoch: manifest.epoch,
            loss_history: manifest.loss_history,
            mode_collapse: manifest.mode_collapse,
            g_steps: manifest.g_steps,
            d_steps: manifest.d_steps,
        },
        manifest.provenance,
    ))
}

/// Trained generator as a matrix source for Monte Carlo runs.
pub struct GanSource {
    pub ckpt: GanCheckpoint,
}

impl MatrixSource for GanSource {
    fn draw(&self, regime: RegimeLabel, dim: usize, seed: Seed) -> Result<CorrelationMatrix> {
        if dim != self.ckpt.config.dim {
            return Err(Error::InvalidInput(format!("generator dim {} cannot produce dim {dim}", self.ckpt.config.dim)));
        }
        sample(&self.ckpt, regime, 1, seed, true)?
            .matrices()
            .pop()
            .ok_or_else(|| Error::NumericalFailure("generator returned no sample".into()))
    }

    fn name(&self) -> String {
        format!("cgan(epoch {})", self.ckpt.epoch)
    }
}
