use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    #[error("stale forward cache: network version {network}, cache version {cache}")]
    StaleCache { network: u64, cache: u64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid optimizer setting: {0}")]
    InvalidConfig(String),
    #[error("unsupported checkpoint version {0:?}")]
    UnsupportedVersion(String),
    #[error("corrupt checkpoint data: {0}")]
    CorruptData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
