//! Command-line entry point: argument parsing, exit-code contract and
//! subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corrlab::error::ErrorClass;
use corrlab::geometry::MeanMethod;
use corrlab::portfolio::Method;
use corrlab::samplers::RegimeLabel;

pub mod commands;
pub mod config;
pub mod output;
pub mod repro;

pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "corrlab", version, about = "Correlation-matrix sampling, geometry, generative modelling and portfolio experiments")]
pub struct Cli {
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw random correlation matrices into a corpus directory. Only the
    /// regime sampler sets a meaningful label; the others label items normal.
    Sample(SampleArgs),
    /// Project a symmetric matrix onto the nearest correlation matrix.
    Project(ProjectArgs),
    /// Stylized-fact report for a corpus directory or a single CSV matrix.
    Metrics(MetricsArgs),
    /// Affine-invariant geodesics and matrix means.
    #[command(subcommand)]
    Geometry(GeometryCommand),
    /// Build, synthesize or inspect labeled corpora.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train the conditional GAN on a corpus.
    Train(TrainArgs),
    /// Sample matrices from a trained GAN checkpoint.
    Generate(GenerateArgs),
    /// Compare a real and a synthetic corpus.
    Evaluate(EvaluateArgs),
    /// Portfolio construction.
    #[command(subcommand)]
    Portfolio(PortfolioCommand),
    /// Monte Carlo allocation study.
    #[command(subcommand)]
    Mc(McCommand),
    /// Full pipeline from one experiment config.
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    Onion,
    Cvine,
    Spectrum,
    Factor,
    Regime,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum)]
    pub method: SamplerKind,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// LKJ shape for `onion`.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Beta shape parameters of the partial correlations for `cvine`.
    #[arg(long, default_value_t = 1.0)]
    pub beta_a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_b: f64,
    /// Comma-separated spectrum for `spectrum` (must have `dim` entries summing to `dim`).
    #[arg(long, value_delimiter = ',')]
    pub eigenvalues: Vec<f64>,
    /// Loading range for `factor`.
    #[arg(long, default_value_t = 0.3)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.8)]
    pub hi: f64,
    /// Regime for `regime`, using the default regime parameters.
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<RegimeLabel>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Headerless CSV matrix.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = corrlab::linalg::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Corpus directory or headerless CSV matrix.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Observations-to-assets ratio for the Marchenko–Pastur bounds.
    #[arg(long, default_value_t = corrlab::facts::DEFAULT_Q_RATIO)]
    pub q_ratio: f64,
}

#[derive(Debug, Subcommand)]
pub enum GeometryCommand {
    /// Point at `t` on the geodesic from A to B.
    Geodesic(GeodesicArgs),
    /// Mean of a set of correlation matrices.
    Mean(MeanArgs),
}

#[derive(Debug, Args)]
pub struct GeodesicArgs {
    #[arg(long, value_name = "FILE")]
    pub a: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MeanArgs {
    #[arg(long, value_parser = parse_mean_method)]
    pub method: MeanMethod,
    /// One corpus directory, or one or more CSV matrices.
    #[arg(long = "in", value_name = "PATH", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Rolling-window corpus from a returns CSV.
    Build(BuildArgs),
    /// Surrogate corpus from the regime sampler.
    Synth(SynthArgs),
    /// Print a summary of a corpus directory.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleKind {
    Tercile,
    Fixed,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_name = "FILE")]
    pub returns: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 252)]
    pub window: usize,
    #[arg(long, default_value_t = 21)]
    pub step: usize,
    #[arg(long, value_enum, default_value_t = RuleKind::Tercile)]
    pub rule: RuleKind,
    /// Return threshold for `--rule fixed`.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub count_per_regime: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// GAN configuration JSON.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_name = "DIR")]
    pub ckpt: PathBuf,
    #[arg(long, value_parser = parse_regime)]
    pub regime: RegimeLabel,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Keep raw generator output instead of projecting onto the elliptope.
    #[arg(long)]
    pub no_project: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    pub real: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub synth: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Number of label-stratified sets per corpus for the distance statistics.
    #[arg(long, default_value_t = 3)]
    pub sets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the PCA point clouds (defaults to `clouds/` next to the report).
    #[arg(long, value_name = "DIR")]
    pub clouds: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PortfolioCommand {
    /// Allocation weights for a covariance matrix.
    Weights(WeightsArgs),
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Headerless CSV covariance matrix.
    #[arg(long, value_name = "FILE")]
    pub cov: PathBuf,
    /// Write the JSON here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum McCommand {
    /// Simulate allocation records.
    Run(McRunArgs),
    /// Linear surrogate and exact Shapley attributions over records.
    Explain(ExplainArgs),
    /// Per-regime win rates with bootstrap intervals.
    Findings(FindingsArgs),
}

#[derive(Debug, Args)]
pub struct McRunArgs {
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Draw matrices from this GAN checkpoint instead of the regime sampler.
    #[arg(long, value_name = "DIR")]
    pub ckpt: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetKind {
    Outperformance,
    Decay,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,
    #[arg(long, value_enum)]
    pub target: TargetKind,
    /// Method whose decay is explained with `--target decay`.
    #[arg(long, value_parser = parse_method, default_value = "hrp")]
    pub method: Method,
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct FindingsArgs {
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Bootstrap seed (defaults to one derived from the records' seed).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Output directory (defaults to `<config stem>.out` beside the config).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn parse_regime(s: &str) -> Result<RegimeLabel, String> {
    s.parse().map_err(|e: corrlab::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: corrlab::Error| e.to_string())
}

fn parse_mean_method(s: &str) -> Result<MeanMethod, String> {
    s.parse().map_err(|e: corrlab::Error| e.to_string())
}

/// Failure of a subcommand: bad arguments or an error from the library.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(corrlab::Error),
}

impl From<corrlab::Error> for CliError {
    fn from(e: corrlab::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Core(e) => e.kind(),
        }
    }

    /// `error: kind=<Kind> exit=<code> msg=<JSON string>` on one line.
    pub fn line(&self) -> String {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        let msg = serde_json::to_string(&msg).unwrap_or_else(|_| "\"\"".into());
        format!("error: kind={} exit={} msg={msg}", self.kind(), self.exit_code())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors go to standard error.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "{}", CliError::Usage(first).line());
            let _ = write!(err, "{}", e.render());
            return EXIT_USAGE;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{}", e.line());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build()
                .map_err(|e| CliError::Core(corrlab::Error::Config(format!("thread pool: {e}"))))?;
            pool.install(|| run_command(cli.command))
        }
        None => run_command(cli.command),
    }
}

fn run_command(command: Command) -> CliResult<()> {
    match command {
        Command::Sample(a) => commands::sample(&a),
        Command::Project(a) => commands::project(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Geometry(GeometryCommand::Geodesic(a)) => commands::geodesic(&a),
        Command::Geometry(GeometryCommand::Mean(a)) => commands::mean(&a),
        Command::Corpus(CorpusCommand::Build(a)) => commands::corpus_build(&a),
        Command::Corpus(CorpusCommand::Synth(a)) => commands::corpus_synth(&a),
        Command::Corpus(CorpusCommand::Inspect(a)) => commands::corpus_inspect(&a),
        Command::Train(a) => commands::train(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Portfolio(PortfolioCommand::Weights(a)) => commands::weights(&a),
        Command::Mc(McCommand::Run(a)) => commands::mc_run(&a),
        Command::Mc(McCommand::Explain(a)) => commands::mc_explain(&a),
        Command::Mc(McCommand::Findings(a)) => commands::mc_findings(&a),
        Command::Repro(a) => repro::run(&a.config, a.out.as_deref()).map(|_| ()),
    }
}
