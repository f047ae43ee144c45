//! `repro`: surrogate corpus → train → generate → evaluate → mc → findings.

use std::fs;
use std::path::{Path, PathBuf};

use corrlab::corpus::{self, LabeledCorpus};
use corrlab::gan::{self, GanCheckpoint, GanSource};
use corrlab::mc::{self, Target};
use corrlab::provenance::Provenance;
use corrlab::samplers::RegimeLabel;
use corrlab::{Error, Result};
use serde::Serialize;

use crate::commands::{evaluate_corpora, explain_records, generate_corpus, loss_csv, train_and_save, write_records_file};
use crate::config::{ExperimentConfig, McSourceKind};
use crate::output::{file_sha256, write_json, write_report, write_text};
use crate::CliResult;

pub const SUMMARY_FILE: &str = "repro.json";
pub const CORPUS_DIR: &str = "corpus";
pub const GAN_DIR: &str = "gan";
pub const SYNTH_DIR: &str = "synth";
pub const CLOUDS_DIR: &str = "clouds";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const RECORDS_FILE: &str = "records.ecrec";
pub const SHAP_FILE: &str = "shap.json";
pub const FINDINGS_FILE: &str = "findings.json";

#[derive(Debug, Clone, Serialize)]
pub struct RegimeHeadline {
    pub regime: RegimeLabel,
    pub sf1_real: f64,
    pub sf1_synthetic: f64,
    pub top_eig_share_real: f64,
    pub top_eig_share_synthetic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Headline {
    pub regimes: Vec<RegimeHeadline>,
    pub synthetic_accuracy: f64,
    pub real_holdout_accuracy: f64,
    pub mu_e: f64,
    pub mu_g: f64,
    pub ratio: f64,
    pub mode_collapse: bool,
    pub mc_records: usize,
    pub mc_skipped: usize,
    pub max_efficiency_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproSummary {
    pub config: ExperimentConfig,
    pub headline: Headline,
    pub artifacts: Vec<ArtifactHash>,
}

pub fn default_out(config: &Path) -> PathBuf {
    config.with_extension("out")
}

fn check_reuse(what: &str, dir: &Path, found: Option<&Provenance>, expected: &str) -> Result<()> {
    match found {
        Some(p) if p.config_sha256 == expected => Ok(()),
        Some(p) => Err(Error::Config(format!(
            "{} holds a {what} from config {} but this config hashes to {expected}; use a fresh output directory",
            dir.display(),
            p.config_sha256
        ))),
        None => Err(Error::Config(format!("{} holds a {what} without provenance; refusing to reuse it", dir.display()))),
    }
}

fn stage_corpus(cfg: &ExperimentConfig, dir: &Path, prov: &Provenance) -> Result<LabeledCorpus> {
    if dir.join(corpus::MANIFEST_FILE).exists() {
        let c = corpus::read_corpus(dir)?;
        check_reuse("corpus", dir, c.provenance.as_ref(), &prov.config_sha256)?;
        eprintln!("note: reusing corpus at {}", dir.display());
        return Ok(c);
    }
    let mut c = corpus::build_surrogate(cfg.corpus.count_per_regime, cfg.corpus.dim, &cfg.corpus.params, cfg.corpus_seed())?;
    c.provenance = Some(prov.clone());
    corpus::write_corpus(&c, dir)?;
    Ok(c)
}

fn stage_gan(cfg: &ExperimentConfig, corpus: &LabeledCorpus, dir: &Path, prov: &Provenance) -> Result<GanCheckpoint> {
    if dir.join(gan::GAN_FILE).exists() {
        let (ckpt, found) = gan::load(dir)?;
        check_reuse("GAN checkpoint", dir, found.as_ref(), &prov.config_sha256)?;
        eprintln!("note: reusing GAN checkpoint at {}", dir.display());
        write_text(&dir.join("loss.csv"), &loss_csv(&ckpt))?;
        return Ok(ckpt);
    }
    train_and_save(corpus, &cfg.gan_config(), dir, prov)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        let rel = p.strip_prefix(root).unwrap_or(&p).to_path_buf();
        if rel == Path::new(SUMMARY_FILE) || rel.starts_with(Path::new(GAN_DIR).join("last_stable")) {
            continue;
        }
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(rel);
        }
    }
    Ok(())
}

/// Runs the whole pipeline into `out` (default: beside the config) and
/// returns the summary that is also written to `repro.json`.
pub fn run(config_path: &Path, out: Option<&Path>) -> CliResult<ReproSummary> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| default_out(config_path));
    Ok(run_config(&cfg, &out)?)
}

pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> Result<ReproSummary> {
    cfg.check()?;
    fs::create_dir_all(out)?;
    let prov = Provenance::new(cfg.hash(), cfg.master());

    let real = stage_corpus(cfg, &out.join(CORPUS_DIR), &prov)?;
    let ckpt = stage_gan(cfg, &real, &out.join(GAN_DIR), &prov)?;

    let (mut synth, generation) = generate_corpus(&ckpt, &RegimeLabel::ALL, cfg.eval.samples_per_regime, cfg.generate_seed())?;
    for g in &generation {
        for w in &g.warnings {
            eprintln!("warning: regime={} msg={}", g.regime, serde_json::to_string(w)?);
        }
    }
    synth.provenance = Some(prov.clone());
    corpus::write_corpus(&synth, &out.join(SYNTH_DIR))?;

    let evaluation = evaluate_corpora(&real, &synth, cfg.eval.sets, cfg.eval_seed(), &out.join(CLOUDS_DIR))?;
    write_report(&out.join(EVALUATION_FILE), &prov, serde_json::json!({ "generation": generation, "evaluation": evaluation }))?;

    let mc_cfg = cfg.mc_config();
    let run = match cfg.mc.source {
        McSourceKind::Surrogate => mc::run(&mc_cfg, &mc::SurrogateSource { params: cfg.corpus.params.clone() })?,
        McSourceKind::Gan => mc::run(&mc_cfg, &GanSource { ckpt: ckpt.clone() })?,
    };
    for s in &run.skipped {
        eprintln!("warning: kind=SkippedDraw index={} regime={} msg={}", s.index, s.regime, serde_json::to_string(&s.reason)?);
    }
    write_records_file(&out.join(RECORDS_FILE), &run.records, &prov)?;

    let explanation = explain_records(&run.records, Target::Outperformance)?;
    write_report(&out.join(SHAP_FILE), &prov, &explanation)?;

    let findings = mc::regime_findings(&run.records, cfg.findings_seed());
    write_report(&out.join(FINDINGS_FILE), &prov, &findings)?;

    let headline = Headline {
        regimes: evaluation
            .facts
            .iter()
            .map(|f| RegimeHeadline {
                regime: f.regime,
                sf1_real: f.real.sf1_mean_offdiag,
                sf1_synthetic: f.synthetic.sf1_mean_offdiag,
                top_eig_share_real: f.real.sf2_top_eig_share,
                top_eig_share_synthetic: f.synthetic.sf2_top_eig_share,
            })
            .collect(),
        synthetic_accuracy: evaluation.fidelity.accuracy,
        real_holdout_accuracy: evaluation.fidelity.real_holdout_accuracy,
        mu_e: evaluation.distance.mu_e,
        mu_g: evaluation.distance.mu_g,
        ratio: evaluation.ratio,
        mode_collapse: ckpt.mode_collapse,
        mc_records: run.records.len(),
        mc_skipped: run.skipped.len(),
        max_efficiency_gap: explanation.max_efficiency_gap,
    };

    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    let artifacts = files
        .iter()
        .map(|rel| {
            Ok(ArtifactHash {
                path: rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/"),
                sha256: file_sha256(&out.join(rel))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = ReproSummary { config: cfg.clone(), headline, artifacts };
    write_json(&out.join(SUMMARY_FILE), &crate::output::Report { provenance: &prov, body: &summary })?;
    Ok(summary)
}
