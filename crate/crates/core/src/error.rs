use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GladError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GladError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: unknown label value `{value}`")]
    UnknownLabel { row: usize, value: String },
    #[error("dataset is empty or has fewer than 2 instances")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient rejected")]
    NonFiniteGradient,
    #[error("non-finite loss during training pass")]
    NonFiniteLoss,
    #[error("no pending query")]
    NoPendingQuery,
    #[error("budget exhausted")]
    BudgetExhausted,
    #[error("all instances are labeled")]
    SessionExhausted,
    #[error("label submitted for instance {got}, but the pending query is {expected}")]
    QueryMismatch { expected: usize, got: usize },
    #[error("instance index {index} out of range for {n} instances")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("analyst unavailable after {attempts} attempts: {message}")]
    AnalystUnavailable { attempts: usize, message: String },
    #[error("perturbation sampling degenerate: surrogate features have no spread")]
    DegeneratePerturbation,
    #[error("unsupported snapshot version {0}")]
    SnapshotVersion(u32),
}

impl GladError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GladError::Io {
            path: path.into(),
            source,
        }
    }
}
