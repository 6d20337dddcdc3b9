use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input record, located by file line (1-based).
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("invalid: {0}")]
    Invalid(String),

    #[error("unknown reference: {0}")]
    UnknownReference(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("score {score} out of range [0, 1] for {what}")]
    ScoreRange { what: String, score: f64 },

    /// No summary proposition is covered by any document, so coverage is 0/0.
    #[error("degenerate topic {topic_id} / {summary_id}: no summary proposition is covered")]
    DegenerateTopic {
        topic_id: String,
        summary_id: String,
    },

    #[error("exhaustive search over {combinations} subsets exceeds cap {cap}")]
    CapExceeded { combinations: u128, cap: u128 },

    #[error("every unit was skipped as degenerate")]
    AllSkipped,

    #[error("remote scorer {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    #[error("remote scorer {endpoint}: protocol error: {message}")]
    Protocol { endpoint: String, message: String },

    #[error("scoring batch {batch} failed: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
