use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("{path}: {message}")]
    IngestFile { path: PathBuf, message: String },

    #[error("imputation error: channel {channel} of sample '{sample}' has {valid} non-missing values (need at least 2)")]
    Imputation {
        sample: String,
        channel: String,
        valid: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("svm error: {0}")]
    Svm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
