use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum GrdError {
    #[error("malformed grid: {0}")]
    MalformedGrid(String),

    #[error("invalid axes: {0}")]
    InvalidAxes(String),

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid samples: {0}")]
    InvalidSamples(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {x} outside interpolation domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("rank deficient basis at index {index}")]
    RankDeficient { index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("no overlap: {0}")]
    NoOverlap(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T, E = GrdError> = std::result::Result<T, E>;
