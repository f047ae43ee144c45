use thiserror::Error;

use crate::linalg::SymmetricMatrix;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure {
        iterations: usize,
        residual: f64,
        last: Box<SymmetricMatrix>,
    },
    #[error("dimension {dim} is too small (need at least {required})")]
    InsufficientDimension { dim: usize, required: usize },
    #[error("degenerate structure: {0}")]
    DegenerateStructure(String),
    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("asset {asset} has zero variance in window starting at {window}")]
    DegenerateColumn { asset: String, window: usize },
    #[error("unsupported format version: {0}")]
    UnsupportedVersion(String),
    #[error("corrupt data: {0}")]
    CorruptData(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged {
        epoch: usize,
        reason: String,
        last_stable: Box<crate::gan::GanCheckpoint>,
    },
    #[error("PCA basis is degenerate: {0}")]
    DegenerateBasis(String),
    #[error("rank-deficient design; collinear features: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Neural(#[from] corrlab_neural::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NumericalFailure(_)
            | Error::NotPositiveDefinite { .. }
            | Error::ConvergenceFailure { .. }
            | Error::TrainingDiverged { .. }
            | Error::DegenerateBasis(_)
            | Error::RankDeficient(_) => ErrorClass::Numerical,
            Error::Neural(corrlab_neural::Error::NumericalFailure(_)) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    /// Short stable identifier for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::InsufficientDimension { .. } => "InsufficientDimension",
            Error::DegenerateStructure(_) => "DegenerateStructure",
            Error::ParseError { .. } => "ParseError",
            Error::DegenerateColumn { .. } => "DegenerateColumn",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::CorruptData(_) => "CorruptData",
            Error::Config(_) => "ConfigError",
            Error::TrainingDiverged { .. } => "TrainingDiverged",
            Error::DegenerateBasis(_) => "DegenerateBasis",
            Error::RankDeficient(_) => "RankDeficient",
            Error::Unsupported(_) => "Unsupported",
            Error::Neural(_) => "NeuralError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }
}
