//! Versioned experiment configuration for `repro`.

use std::path::Path;

use corrlab::gan::{Arch, GanConfig, REGIMES};
use corrlab::mc::McConfig;
use corrlab::provenance::config_hash;
use corrlab::samplers::{RegimeLabel, RegimeParams};
use corrlab::{Error, Result, Seed};
use serde::{Deserialize, Serialize};

use crate::output::read_config;

pub const EXPERIMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub gan: GanSpec,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub mc: McSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub dim: usize,
    pub count_per_regime: usize,
    /// Regime sampler settings in stressed, normal, rally order.
    #[serde(default = "default_params")]
    pub params: [RegimeParams; 3],
}

fn default_params() -> [RegimeParams; 3] {
    RegimeLabel::ALL.map(RegimeParams::defaults)
}

/// GAN settings; the dimension comes from the corpus and the seed from the
/// master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanSpec {
    pub noise_dim: usize,
    pub arch: Arch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub d_steps_per_g: usize,
}

impl Default for GanSpec {
    fn default() -> Self {
        let g = GanConfig::default();
        GanSpec {
            noise_dim: g.noise_dim,
            arch: g.arch,
            epochs: g.epochs,
            batch_size: g.batch_size,
            lr_g: g.lr_g,
            lr_d: g.lr_d,
            d_steps_per_g: g.d_steps_per_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    /// Synthetic matrices generated per regime.
    pub samples_per_regime: usize,
    /// Label-stratified sets per corpus for the distance statistics.
    pub sets: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { samples_per_regime: 300, sets: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McSourceKind {
    Surrogate,
    Gan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    /// Simulations per regime.
    pub count: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub source: McSourceKind,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec { count: 300, t_in: 252, t_out: 252, source: McSourceKind::Surrogate }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw: serde_json::Value = read_config(path)?;
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == EXPERIMENT_VERSION as u64 => {}
            Some(v) => return Err(Error::UnsupportedVersion(format!("experiment config v{v} (expected v{EXPERIMENT_VERSION})"))),
            None => return Err(Error::Config(format!("{}: missing integer field 'version'", path.display()))),
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Checks every stage's settings before anything runs.
    pub fn check(&self) -> Result<()> {
        if self.corpus.count_per_regime == 0 {
            return Err(Error::Config("corpus.count_per_regime must be at least 1".into()));
        }
        for p in &self.corpus.params {
            p.check().map_err(|e| Error::Config(format!("corpus.params: {e}")))?;
        }
        self.gan_config().check()?;
        if self.eval.sets < 2 {
            return Err(Error::Config("eval.sets must be at least 2".into()));
        }
        if self.eval.samples_per_regime < self.eval.sets {
            return Err(Error::Config("eval.samples_per_regime must be at least eval.sets".into()));
        }
        self.mc_config().check().map_err(|e| Error::Config(format!("mc: {e}")))?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn master(&self) -> Seed {
        Seed(self.seed)
    }

    pub fn corpus_seed(&self) -> Seed {
        self.master().named("corpus")
    }

    pub fn generate_seed(&self) -> Seed {
        self.master().named("generate")
    }

    pub fn eval_seed(&self) -> Seed {
        self.master().named("eval")
    }

    pub fn findings_seed(&self) -> Seed {
        self.master().named("findings")
    }

    pub fn gan_config(&self) -> GanConfig {
        let g = &self.gan;
        GanConfig {
            dim: self.corpus.dim,
            noise_dim: g.noise_dim,
            regime_count: REGIMES,
            arch: g.arch,
            epochs: g.epochs,
            batch_size: g.batch_size,
            lr_g: g.lr_g,
            lr_d: g.lr_d,
            d_steps_per_g: g.d_steps_per_g,
            seed: self.master().named("gan"),
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            dim: self.corpus.dim,
            count: self.mc.count,
            regimes: RegimeLabel::ALL.to_vec(),
            t_in: self.mc.t_in,
            t_out: self.mc.t_out,
            seed: self.master().named("mc"),
        }
    }
}
