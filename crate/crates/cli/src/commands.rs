//! Subcommand implementations. Stages shared with `repro` are exposed as
//! plain functions over in-memory values.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use corrlab::corpus::{
    self, CorpusItem, CorpusSource, ItemMeta, LabelRule, LabeledCorpus, WindowSpec,
};
use corrlab::eval::{self, DistanceStats, FactComparison, FidelityReport, PointCloud2D};
use corrlab::facts::{stylized_report, StylizedFactReport};
use corrlab::gan::{self, GanCheckpoint, GanConfig, GanSource};
use corrlab::geometry::{self, MeanResult};
use corrlab::linalg::{
    self, matrix_to_csv, nearest_correlation_traced, read_matrix_csv, CorrelationMatrix,
    CovarianceMatrix, SymmetricMatrix, JACOBI_TOL,
};
use corrlab::mc::{self, Findings, McConfig, McRecord, ShapleyAttribution, SurrogateModel, Target};
use corrlab::portfolio;
use corrlab::provenance::{config_hash, sha256_hex, Provenance};
use corrlab::samplers::{sample_many, RegimeLabel, RegimeParams, SamplerSpec};
use corrlab::{Error, Seed};
use serde::Serialize;
use serde_json::json;

use crate::output::{corpus_digest, ensure_parent, file_sha256, read_config, write_report, write_text};
use crate::{
    BuildArgs, CliError, CliResult, EvaluateArgs, ExplainArgs, FindingsArgs, GenerateArgs, GeodesicArgs,
    InspectArgs, McRunArgs, MeanArgs, MetricsArgs, ProjectArgs, RuleKind, SampleArgs, SamplerKind, SynthArgs,
    TargetKind, TrainArgs, WeightsArgs,
};

/// Tolerance used when reading correlation matrices from text files.
pub const INPUT_TOL: f64 = 1e-8;
/// Allowed `|Σφ − (prediction − baseline)|`, relative to `1 + |prediction|`.
pub const EFFICIENCY_TOL: f64 = 1e-10;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn invocation(command: &str, args: serde_json::Value) -> serde_json::Value {
    json!({ "command": command, "args": args })
}

fn provenance(command: &str, args: serde_json::Value, seed: Seed) -> Provenance {
    Provenance::new(config_hash(&invocation(command, args)), seed)
}

pub fn read_symmetric(path: &Path) -> corrlab::Result<SymmetricMatrix> {
    SymmetricMatrix::from_matrix(&read_matrix_csv(path)?)
}

pub fn read_correlation(path: &Path) -> corrlab::Result<CorrelationMatrix> {
    CorrelationMatrix::new(read_symmetric(path)?, INPUT_TOL)
}

fn write_matrix(path: &Path, m: &SymmetricMatrix) -> corrlab::Result<()> {
    write_text(path, &matrix_to_csv(&m.to_matrix()))
}

pub fn sample(a: &SampleArgs) -> CliResult<()> {
    let spec = match a.method {
        SamplerKind::Onion => SamplerSpec::Onion { eta: a.eta },
        SamplerKind::Cvine => SamplerSpec::Cvine { beta_a: a.beta_a, beta_b: a.beta_b },
        SamplerKind::Spectrum => {
            if a.eigenvalues.is_empty() {
                return Err(usage("--method spectrum requires --eigenvalues"));
            }
            SamplerSpec::Spectrum { eigenvalues: a.eigenvalues.clone() }
        }
        SamplerKind::Factor => SamplerSpec::Factor { lo: a.lo, hi: a.hi },
        SamplerKind::Regime => {
            let regime = a.regime.ok_or_else(|| usage("--method regime requires --regime"))?;
            SamplerSpec::Regime { regime, params: RegimeParams::defaults(regime) }
        }
    };
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let seed = Seed(a.seed);
    let matrices = sample_many(&spec, a.dim, a.count, seed)?;
    // only the regime sampler carries a meaningful label
    let label = match &spec {
        SamplerSpec::Regime { regime, .. } => *regime,
        _ => RegimeLabel::Normal,
    };
    let mut corpus = LabeledCorpus::empty(a.dim, CorpusSource::Generated);
    corpus.items = matrices
        .into_iter()
        .enumerate()
        .map(|(i, matrix)| CorpusItem { matrix, label, meta: ItemMeta::Draw { index: i, seed: seed.stream(i as u64) } })
        .collect();
    corpus.provenance = Some(provenance("sample", json!({ "spec": spec, "dim": a.dim, "count": a.count }), seed));
    corpus::write_corpus(&corpus, &a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct ProjectionMeta {
    method: &'static str,
    tolerance: f64,
    max_iter: usize,
    iterations: usize,
    converged: bool,
    already_valid: bool,
    final_residual: Option<f64>,
    displacement: f64,
}

pub fn project(a: &ProjectArgs) -> CliResult<()> {
    let s = read_symmetric(&a.input)?;
    let (c, trace) = nearest_correlation_traced(&s, a.tol, a.max_iter)?;
    fs::create_dir_all(&a.out)?;
    write_matrix(&a.out.join("projected.csv"), c.as_symmetric())?;
    let prov = provenance(
        "project",
        json!({ "input_sha256": file_sha256(&a.input)?, "tol": a.tol, "max_iter": a.max_iter }),
        Seed(0),
    );
    let meta = ProjectionMeta {
        method: "alternating projections with Dykstra correction",
        tolerance: a.tol,
        max_iter: a.max_iter,
        iterations: trace.iterations,
        converged: true,
        already_valid: trace.already_valid,
        final_residual: trace.residuals.last().copied(),
        displacement: s.frobenius_distance(c.as_symmetric()),
    };
    write_report(&a.out.join("projection.json"), &prov, meta)?;
    Ok(())
}

#[derive(Serialize)]
struct MatrixMetrics {
    index: usize,
    label: Option<RegimeLabel>,
    #[serde(flatten)]
    report: StylizedFactReport,
}

#[derive(Serialize)]
struct MetricsBody {
    q_ratio: f64,
    matrices: Vec<MatrixMetrics>,
    summary: eval::FactMeans,
}

/// A corpus directory, or a single CSV matrix (unlabeled).
fn read_matrices(path: &Path) -> corrlab::Result<(Vec<CorrelationMatrix>, Vec<Option<RegimeLabel>>, String)> {
    if path.is_dir() {
        let c = corpus::read_corpus(path)?;
        let digest = corpus_digest(&c);
        let labels = c.items.iter().map(|i| Some(i.label)).collect();
        Ok((c.items.into_iter().map(|i| i.matrix).collect(), labels, digest))
    } else {
        Ok((vec![read_correlation(path)?], vec![None], file_sha256(path)?))
    }
}

pub fn metrics(a: &MetricsArgs) -> CliResult<()> {
    let (matrices, labels, digest) = read_matrices(&a.input)?;
    let records = matrices
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (c, label))| Ok(MatrixMetrics { index, label, report: stylized_report(c, a.q_ratio)? }))
        .collect::<corrlab::Result<Vec<_>>>()?;
    let refs: Vec<&CorrelationMatrix> = matrices.iter().collect();
    let summary = eval::fact_means(&refs)?;
    let prov = provenance("metrics", json!({ "input_sha256": digest, "q_ratio": a.q_ratio }), Seed(0));
    write_report(&a.report, &prov, MetricsBody { q_ratio: a.q_ratio, matrices: records, summary })?;
    Ok(())
}

#[derive(Serialize)]
struct GeodesicMeta {
    method: &'static str,
    t: f64,
    tolerance: f64,
    iterations: usize,
    converged: bool,
    /// Largest `|diag − 1|` of the geodesic point (zero only if it stays in the elliptope's affine slice).
    max_diag_dev: f64,
    matrix_file: &'static str,
}

pub fn geodesic(a: &GeodesicArgs) -> CliResult<()> {
    let ma = CovarianceMatrix::new(read_symmetric(&a.a)?)?;
    let mb = CovarianceMatrix::new(read_symmetric(&a.b)?)?;
    let p = geometry::geodesic(&ma, &mb, a.t)?;
    let m = p.matrix.as_symmetric();
    fs::create_dir_all(&a.out)?;
    write_matrix(&a.out.join("geodesic.csv"), m)?;
    let prov = provenance(
        "geometry geodesic",
        json!({ "a_sha256": file_sha256(&a.a)?, "b_sha256": file_sha256(&a.b)?, "t": a.t }),
        Seed(0),
    );
    let meta = GeodesicMeta {
        method: "affine-invariant geodesic",
        t: a.t,
        tolerance: JACOBI_TOL,
        iterations: 0,
        converged: true,
        max_diag_dev: m.diag().iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max),
        matrix_file: "geodesic.csv",
    };
    write_report(&a.out.join("geodesic.json"), &prov, meta)?;
    Ok(())
}

#[derive(Serialize)]
struct MeanMeta<'a> {
    method: String,
    tolerance: f64,
    iterations: usize,
    converged: bool,
    best_effort: bool,
    gradient_norm: f64,
    objective: f64,
    jittered: usize,
    jitter: f64,
    inputs: usize,
    matrix_file: &'a str,
}

pub fn mean(a: &MeanArgs) -> CliResult<()> {
    let (set, digest) = if a.inputs.len() == 1 && a.inputs[0].is_dir() {
        let (m, _, d) = read_matrices(&a.inputs[0])?;
        (m, d)
    } else {
        let mut set = Vec::new();
        let mut hashes = Vec::new();
        for p in &a.inputs {
            set.push(read_correlation(p)?);
            hashes.push(file_sha256(p)?);
        }
        (set, config_hash(&hashes))
    };
    let r: MeanResult = geometry::mean(a.method, &set)?;
    fs::create_dir_all(&a.out)?;
    write_matrix(&a.out.join("mean.csv"), &r.matrix)?;
    let prov = provenance("geometry mean", json!({ "method": a.method, "inputs_sha256": digest }), Seed(0));
    let meta = MeanMeta {
        method: r.method.to_string(),
        tolerance: r.tolerance,
        iterations: r.iterations,
        converged: r.converged,
        best_effort: r.best_effort,
        gradient_norm: r.gradient_norm,
        objective: r.objective,
        jittered: r.jittered,
        jitter: r.jitter,
        inputs: set.len(),
        matrix_file: "mean.csv",
    };
    write_report(&a.out.join("mean.json"), &prov, meta)?;
    Ok(())
}

pub fn corpus_build(a: &BuildArgs) -> CliResult<()> {
    let rule = match (a.rule, a.threshold) {
        (RuleKind::Tercile, None) => LabelRule::Tercile,
        (RuleKind::Tercile, Some(_)) => return Err(usage("--threshold only applies to --rule fixed")),
        (RuleKind::Fixed, Some(threshold)) => LabelRule::Fixed { threshold },
        (RuleKind::Fixed, None) => return Err(usage("--rule fixed requires --threshold")),
    };
    if a.window < 2 || a.step == 0 {
        return Err(usage("--window must be at least 2 and --step at least 1"));
    }
    let window = WindowSpec { length: a.window, step: a.step, ..WindowSpec::default() };
    let mut c = corpus::ingest_returns(&a.returns, window, rule)?;
    c.provenance = Some(provenance(
        "corpus build",
        json!({ "returns_sha256": file_sha256(&a.returns)?, "window": window, "rule": rule }),
        Seed(0),
    ));
    corpus::write_corpus(&c, &a.out)?;
    Ok(())
}

pub fn corpus_synth(a: &SynthArgs) -> CliResult<()> {
    let params = corpus::default_regime_params();
    let seed = Seed(a.seed);
    let mut c = corpus::build_surrogate(a.count_per_regime, a.dim, &params, seed)?;
    c.provenance = Some(provenance(
        "corpus synth",
        json!({ "dim": a.dim, "count_per_regime": a.count_per_regime, "params": params }),
        seed,
    ));
    corpus::write_corpus(&c, &a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct CorpusSummary {
    dim: usize,
    count: usize,
    source: CorpusSource,
    counts: Vec<(RegimeLabel, usize)>,
    repairs: usize,
    window: Option<WindowSpec>,
    asset_names: Vec<String>,
    payload_sha256: String,
    provenance: Option<Provenance>,
}

pub fn corpus_inspect(a: &InspectArgs) -> CliResult<()> {
    let c = corpus::read_corpus(&a.input)?;
    let summary = CorpusSummary {
        dim: c.dim,
        count: c.len(),
        source: c.source,
        counts: RegimeLabel::ALL.iter().map(|&r| (r, c.count(r))).collect(),
        repairs: c.repairs,
        window: c.window,
        payload_sha256: corpus_digest(&c),
        asset_names: c.asset_names,
        provenance: c.provenance,
    };
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    Ok(())
}

/// Per-epoch losses and raw sf1 per regime, for plotting.
pub fn loss_csv(ckpt: &GanCheckpoint) -> String {
    let mut s = String::from("epoch,g_loss,d_loss,sf1_stressed,sf1_normal,sf1_rally\n");
    for e in &ckpt.loss_history {
        let [a, b, c] = e.sf1_by_regime;
        s.push_str(&format!("{},{:?},{:?},{a:?},{b:?},{c:?}\n", e.epoch, e.g_loss, e.d_loss));
    }
    s
}

/// Trains and saves; on divergence the last stable state is saved under
/// `<out>/last_stable` before the error is returned.
pub fn train_and_save(corpus: &LabeledCorpus, config: &GanConfig, out: &Path, prov: &Provenance) -> corrlab::Result<GanCheckpoint> {
    let ckpt = match gan::train(gan::build(config)?, corpus, config) {
        Ok(c) => c,
        Err(Error::TrainingDiverged { epoch, reason, last_stable }) => {
            gan::save(&last_stable, &out.join("last_stable"), Some(prov))?;
            return Err(Error::TrainingDiverged { epoch, reason, last_stable });
        }
        Err(e) => return Err(e),
    };
    gan::save(&ckpt, out, Some(prov))?;
    write_text(&out.join("loss.csv"), &loss_csv(&ckpt))?;
    if ckpt.mode_collapse {
        eprintln!("warning: kind=ModeCollapse msg=\"inter-regime sf1 gap stayed below threshold during training\"");
    }
    Ok(ckpt)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let config: GanConfig = read_config(&a.config)?;
    config.check()?;
    let c = corpus::read_corpus(&a.corpus)?;
    let prov = Provenance::new(
        config_hash(&invocation("train", json!({ "config": config, "corpus_sha256": corpus_digest(&c) }))),
        config.seed,
    );
    train_and_save(&c, &config, &a.out, &prov)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct GenerationSummary {
    pub regime: RegimeLabel,
    pub count: usize,
    pub projected: bool,
    pub mean_displacement: Option<f64>,
    pub max_displacement: Option<f64>,
    /// Raw outputs that already pass validation at the input tolerance.
    pub raw_valid: usize,
    pub warnings: Vec<String>,
}

/// Samples `count` matrices per regime; regime `r` uses `seed.stream(r)`.
pub fn generate_corpus(ckpt: &GanCheckpoint, regimes: &[RegimeLabel], count: usize, seed: Seed) -> corrlab::Result<(LabeledCorpus, Vec<GenerationSummary>)> {
    let mut c = LabeledCorpus::empty(ckpt.config.dim, CorpusSource::Generated);
    let mut summaries = Vec::new();
    for &regime in regimes {
        let s = seed.stream(regime.index() as u64);
        let batch = gan::sample(ckpt, regime, count, s, true)?;
        summaries.push(summarize(&batch, true)?);
        for (i, m) in batch.matrices().into_iter().enumerate() {
            c.items.push(CorpusItem { matrix: m, label: regime, meta: ItemMeta::Draw { index: i, seed: s.stream(i as u64) } });
        }
    }
    Ok((c, summaries))
}

fn summarize(batch: &gan::SampleBatch, projected: bool) -> corrlab::Result<GenerationSummary> {
    let disp: Vec<f64> = batch.samples.iter().filter_map(|s| s.displacement).collect();
    let mut raw_valid = 0;
    for s in &batch.samples {
        if linalg::validate(&s.raw, INPUT_TOL)?.is_valid {
            raw_valid += 1;
        }
    }
    Ok(GenerationSummary {
        regime: batch.regime,
        count: batch.samples.len(),
        projected,
        mean_displacement: (!disp.is_empty()).then(|| disp.iter().sum::<f64>() / disp.len() as f64),
        max_displacement: disp.iter().copied().reduce(f64::max),
        raw_valid,
        warnings: batch.warnings.clone(),
    })
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let (ckpt, ckpt_prov) = gan::load(&a.ckpt)?;
    let seed = Seed(a.seed);
    let prov = provenance(
        "generate",
        json!({
            "ckpt_config_sha256": ckpt_prov.map(|p| p.config_sha256).unwrap_or_else(|| config_hash(&ckpt.config)),
            "ckpt_epoch": ckpt.epoch,
            "regime": a.regime,
            "count": a.count,
            "project": !a.no_project,
        }),
        seed,
    );
    let batch = gan::sample(&ckpt, a.regime, a.count, seed, !a.no_project)?;
    for w in &batch.warnings {
        let (kind, msg) = w.split_once(": ").unwrap_or(("Warning", w));
        eprintln!("warning: kind={kind} msg={}", serde_json::to_string(msg)?);
    }
    let summary = summarize(&batch, !a.no_project)?;
    fs::create_dir_all(&a.out)?;
    if a.no_project {
        let mut bytes = Vec::new();
        for s in &batch.samples {
            bytes.extend(s.raw.to_le_bytes());
        }
        fs::write(a.out.join("raw.f64le"), &bytes)?;
        write_report(
            &a.out.join("raw.json"),
            &prov,
            json!({
                "dim": ckpt.config.dim,
                "count": batch.samples.len(),
                "regime": a.regime,
                "layout": "count x dim x dim little-endian f64, row-major",
                "payload_sha256": sha256_hex(&bytes),
            }),
        )?;
    } else {
        let mut c = LabeledCorpus::empty(ckpt.config.dim, CorpusSource::Generated);
        for (i, m) in batch.matrices().into_iter().enumerate() {
            c.items.push(CorpusItem { matrix: m, label: a.regime, meta: ItemMeta::Draw { index: i, seed: seed.stream(i as u64) } });
        }
        c.provenance = Some(prov.clone());
        corpus::write_corpus(&c, &a.out)?;
    }
    write_report(&a.out.join("generate.json"), &prov, summary)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CloudFile {
    pub name: String,
    pub file: String,
    pub points: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PcaSummary {
    pub eigenvalues: [f64; 2],
    pub explained_share: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub sets: usize,
    pub pca: PcaSummary,
    pub distance: DistanceStats,
    pub ratio: f64,
    pub fidelity: FidelityReport,
    pub facts: Vec<FactComparison>,
    pub clouds: Vec<CloudFile>,
}

/// PCA basis from the whole real corpus; clouds of `sets` stratified subsets
/// of each corpus are written to `clouds_dir`.
pub fn evaluate_corpora(real: &LabeledCorpus, synth: &LabeledCorpus, sets: usize, seed: Seed, clouds_dir: &Path) -> corrlab::Result<Evaluation> {
    if sets < 2 {
        return Err(Error::InvalidInput("need at least two sets".into()));
    }
    let all: Vec<CorrelationMatrix> = real.items.iter().map(|i| i.matrix.clone()).collect();
    let basis = eval::fit_pca(&all)?;
    let clouds_of = |c: &LabeledCorpus| -> corrlab::Result<Vec<PointCloud2D>> {
        eval::stratified_sets(c, sets)?
            .iter()
            .map(|idx| {
                let set: Vec<CorrelationMatrix> = idx.iter().map(|&i| c.items[i].matrix.clone()).collect();
                eval::project(&basis, &set)
            })
            .collect()
    };
    let real_clouds = clouds_of(real)?;
    let synth_clouds = clouds_of(synth)?;
    let distance = eval::distance_stats(&real_clouds, &synth_clouds)?;
    fs::create_dir_all(clouds_dir)?;
    let mut clouds = Vec::new();
    for (prefix, group) in [("real", &real_clouds), ("synth", &synth_clouds)] {
        for (k, cloud) in group.iter().enumerate() {
            let file = format!("{prefix}_{k}.csv");
            let text = cloud.to_csv();
            fs::write(clouds_dir.join(&file), &text)?;
            clouds.push(CloudFile { name: format!("{prefix} {k}"), file, points: cloud.len(), sha256: sha256_hex(text.as_bytes()) });
        }
    }
    Ok(Evaluation {
        sets,
        pca: PcaSummary { eigenvalues: basis.eigenvalues, explained_share: basis.explained_share() },
        ratio: distance.ratio(),
        distance,
        fidelity: eval::classifier_fidelity(real, synth, seed)?,
        facts: eval::compare_facts(real, synth)?,
        clouds,
    })
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let real = corpus::read_corpus(&a.real)?;
    let synth = corpus::read_corpus(&a.synth)?;
    let clouds_dir: PathBuf = match &a.clouds {
        Some(d) => d.clone(),
        None => a.report.parent().unwrap_or(Path::new("")).join("clouds"),
    };
    let seed = Seed(a.seed);
    let e = evaluate_corpora(&real, &synth, a.sets, seed, &clouds_dir)?;
    let prov = provenance(
        "evaluate",
        json!({ "real_sha256": corpus_digest(&real), "synth_sha256": corpus_digest(&synth), "sets": a.sets }),
        seed,
    );
    write_report(&a.report, &prov, e)?;
    Ok(())
}

pub fn weights(a: &WeightsArgs) -> CliResult<()> {
    let cov = read_symmetric(&a.cov)?;
    let w = portfolio::weights(a.method, &cov)?;
    let prov = provenance("portfolio weights", json!({ "method": a.method, "cov_sha256": file_sha256(&a.cov)? }), Seed(0));
    let body = json!({ "method": a.method, "weights": w.as_slice(), "sum": w.sum() });
    match &a.report {
        Some(path) => write_report(path, &prov, body)?,
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &crate::output::Report { provenance: &prov, body })?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_records_file(path: &Path, records: &[McRecord], prov: &Provenance) -> corrlab::Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    mc::write_records(&mut w, records, prov)?;
    w.flush()?;
    Ok(())
}

pub fn read_records_file(path: &Path) -> corrlab::Result<(Provenance, Vec<McRecord>)> {
    mc::read_records(BufReader::new(fs::File::open(path)?))
}

fn warn_skipped(run: &mc::McRun) {
    for s in &run.skipped {
        eprintln!(
            "warning: kind=SkippedDraw index={} regime={} msg={}",
            s.index,
            s.regime,
            serde_json::to_string(&s.reason).unwrap_or_default()
        );
    }
}

pub fn mc_run(a: &McRunArgs) -> CliResult<()> {
    let config: McConfig = read_config(&a.config)?;
    config.check()?;
    let (run, source) = match &a.ckpt {
        Some(dir) => {
            let (ckpt, ckpt_prov) = gan::load(dir)?;
            let tag = ckpt_prov.map(|p| p.config_sha256).unwrap_or_else(|| config_hash(&ckpt.config));
            (mc::run(&config, &GanSource { ckpt })?, json!({ "kind": "gan", "ckpt_config_sha256": tag }))
        }
        None => (mc::run(&config, &mc::SurrogateSource::default())?, json!({ "kind": "surrogate" })),
    };
    warn_skipped(&run);
    let prov = Provenance::new(config_hash(&invocation("mc run", json!({ "config": config, "source": source }))), config.seed);
    write_records_file(&a.out, &run.records, &prov)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordAttribution {
    pub index: u64,
    pub regime: RegimeLabel,
    pub phi: Vec<f64>,
    pub baseline: f64,
    pub prediction: f64,
    pub efficiency_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Explanation {
    pub target: Target,
    pub model: SurrogateModel,
    pub feature_names: Vec<String>,
    pub mean_abs_phi: Vec<f64>,
    pub max_efficiency_gap: f64,
    pub attributions: Vec<RecordAttribution>,
}

/// Surrogate fit plus exact Shapley values for every record against the
/// all-record background. Fails if any attribution breaks efficiency.
pub fn explain_records(records: &[McRecord], target: Target) -> corrlab::Result<Explanation> {
    let model = mc::fit_surrogate(records, target)?;
    let bg = mc::background_means(records)?;
    let mut attributions = Vec::with_capacity(records.len());
    let mut max_gap: f64 = 0.0;
    for r in records {
        let s: ShapleyAttribution = mc::shapley_values(&model, &r.features.to_array(), &bg)?;
        let gap = s.efficiency_gap();
        if !(gap <= EFFICIENCY_TOL * (1.0 + s.prediction.abs())) {
            return Err(Error::NumericalFailure(format!("Shapley efficiency violated for record {} (gap {gap:e})", r.index)));
        }
        max_gap = max_gap.max(gap);
        attributions.push(RecordAttribution {
            index: r.index,
            regime: r.regime,
            phi: s.phi,
            baseline: s.baseline,
            prediction: s.prediction,
            efficiency_gap: gap,
        });
    }
    let n = attributions.len() as f64;
    let k = model.feature_names.len();
    let mean_abs_phi = (0..k).map(|j| attributions.iter().map(|a| a.phi[j].abs()).sum::<f64>() / n).collect();
    Ok(Explanation {
        target,
        feature_names: model.feature_names.clone(),
        model,
        mean_abs_phi,
        max_efficiency_gap: max_gap,
        attributions,
    })
}

pub fn mc_explain(a: &ExplainArgs) -> CliResult<()> {
    let (rec_prov, records) = read_records_file(&a.records)?;
    let target = match a.target {
        TargetKind::Outperformance => Target::Outperformance,
        TargetKind::Decay => Target::Decay { method: a.method },
    };
    let e = explain_records(&records, target)?;
    let prov = Provenance::new(
        config_hash(&invocation("mc explain", json!({ "records_config_sha256": rec_prov.config_sha256, "target": target }))),
        rec_prov.seed,
    );
    write_report(&a.report, &prov, e)?;
    Ok(())
}

pub fn mc_findings(a: &FindingsArgs) -> CliResult<()> {
    let (rec_prov, records) = read_records_file(&a.records)?;
    let seed = a.seed.map(Seed).unwrap_or_else(|| rec_prov.seed.named("findings"));
    let f: Findings = mc::regime_findings(&records, seed);
    let prov = Provenance::new(
        config_hash(&invocation("mc findings", json!({ "records_config_sha256": rec_prov.config_sha256 }))),
        seed,
    );
    write_report(&a.report, &prov, f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_csv_has_header_and_rows() {
        let cfg = GanConfig { epochs: 0, ..GanConfig::default() };
        let mut ck = gan::build(&cfg).unwrap();
        ck.loss_history.push(gan::EpochStats { epoch: 1, g_loss: 0.5, d_loss: 1.25, sf1_by_regime: [0.1, 0.2, 0.3] });
        assert_eq!(loss_csv(&ck), "epoch,g_loss,d_loss,sf1_stressed,sf1_normal,sf1_rally\n1,0.5,1.25,0.1,0.2,0.3\n");
    }

    #[test]
    fn invocation_hash_depends_on_args() {
        let a = provenance("x", json!({"k": 1}), Seed(0));
        let b = provenance("x", json!({"k": 2}), Seed(0));
        let c = provenance("y", json!({"k": 1}), Seed(0));
        assert_ne!(a.config_sha256, b.config_sha256);
        assert_ne!(a.config_sha256, c.config_sha256);
    }
}
