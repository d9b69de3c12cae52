use thiserror::Error;

/// Errors produced by the fitting, simulation, and prediction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("duplicate locations at rows {i} and {j}")]
    DuplicateLocations { i: usize, j: usize },

    #[error("need at least {needed} locations, got {got}")]
    TooFewLocations { needed: usize, got: usize },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
