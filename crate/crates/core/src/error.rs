use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CctsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CctsError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("generator spec error: {0}")]
    Spec(String),

    #[error("non-finite value at step {step}: {what}")]
    Numeric { step: usize, what: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("missing checkpoint for task {0}")]
    MissingCheckpoint(usize),

    #[error("training diverged on task {task} (epoch {epoch}): {reason}")]
    Diverged {
        task: usize,
        epoch: usize,
        reason: String,
        /// Flat parameters of the last state with a finite loss.
        last_finite: Vec<f64>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CctsError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        CctsError::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CctsError::Io {
            path: path.into(),
            source,
        }
    }
}
