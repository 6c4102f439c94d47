use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected K={expected}, got K={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("feature vector must have at least one entry")]
    EmptyVector,

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("negative or non-finite variance {value} at index {index}")]
    InvalidVariance { index: usize, value: f64 },

    #[error("predictor has no prediction available: {0}")]
    NoPrediction(&'static str),

    #[error("invalid weight {0}: must be positive")]
    InvalidWeight(f64),

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("input is not time-sorted at position {position}")]
    Unsorted { position: usize },

    #[error("packet CSI has zero norm")]
    ZeroNorm,

    #[error("labels overlap or are unsorted at position {position}")]
    OverlappingLabels { position: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("step {position}: {source}")]
    AtStep {
        position: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
