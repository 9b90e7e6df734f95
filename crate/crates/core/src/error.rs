use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no assets left after filtering (dropped: {dropped:?})")]
    NoAssets { dropped: Vec<String> },
    #[error("dates are not strictly increasing at row {row} ({date})")]
    NonMonotonicDates { row: usize, date: String },
    #[error("zero price for asset {asset} at index {index}")]
    ZeroPrice { asset: String, index: usize },
    #[error("zero local variance for asset {asset} at index {index}")]
    ZeroVariance { asset: String, index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series too short: need {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("constant series")]
    ConstantSeries,
    #[error("negative diffusion {value} at step {step}")]
    NegativeDiffusion { step: usize, value: f64 },
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
    #[error("no valid initial walker position")]
    NoValidStart,
    #[error("sampler: {0}")]
    Sampler(String),
    #[error("infinite characteristic timescale (zero drift slope)")]
    InfiniteTimescale,
    #[error("config validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
