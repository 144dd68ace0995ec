use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bandit feedback requires the horizon T")]
    MissingHorizon,

    #[error("feature norm {norm} exceeds bound {bound}")]
    FeatureNorm { norm: f64, bound: f64 },

    #[error("prediction probability must be positive, got {0}")]
    NonPositiveProbability(f64),

    #[error("feedback does not match the learner's regime ({0})")]
    FeedbackMismatch(&'static str),

    #[error("comparator norm {norm} lies outside the feasible radius {radius}")]
    ComparatorOutsideBall { norm: f64, radius: f64 },

    #[error("rejection sampling failed after {0} attempts; margin too large")]
    RejectionFailed(usize),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("stream is empty")]
    EmptyStream,

    #[error("need at least one seed")]
    NoSeeds,

    #[error("abstention cost {cost} at round {round} is not below 1/2")]
    AbstentionCost { round: usize, cost: f64 },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
