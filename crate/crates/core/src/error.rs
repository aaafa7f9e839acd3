use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by ingestion, elicitation, the samplers and post-processing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix `{0}` is not symmetric positive-definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("every categorical log-weight is -inf")]
    DegenerateWeights,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("design matrix is rank deficient (numerical rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    ParseNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("empty group `{0}`")]
    EmptyGroup(String),
    #[error("dataset needs N > p (N = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("invalid run schedule: {0}")]
    InvalidSchedule(String),
    #[error("malformed draws file: {0}")]
    Format(String),
    #[error("empty draw set")]
    EmptyDraws,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_) | Error::DegenerateWeights | Error::NonFinite(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
