use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the approximation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("coordinate {value} on axis {axis} lies outside [0, 1]")]
    CoordinateOutOfRange { axis: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("grid guard violated: d*m = {dm} exceeds {limit}")]
    GridTooLarge { dm: usize, limit: usize },

    #[error("insufficient samples: needed {needed}, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },

    #[error("sample plan has {actual} values, layout requires {expected}")]
    PlanSizeMismatch { expected: usize, actual: usize },

    #[error("row has non-positive squared norm {0}")]
    DegenerateRow(f64),

    #[error("covariance not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("resource guard: {0}")]
    ResourceLimit(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
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
