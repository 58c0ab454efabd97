//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by loading, validation, linear algebra, and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("gap in time index at row {row}: expected {expected}, found {found}")]
    IndexGap {
        row: usize,
        expected: i64,
        found: i64,
    },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense build refused: size {size} exceeds cap {cap} (use the operator path)")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("conjugate gradients did not converge: residual {residual:.3e} after {iterations} iterations")]
    CgNonConvergence { iterations: usize, residual: f64 },

    #[error("explosive growth in simulation at t={t}: intensity {lambda:.3e}")]
    ExplosiveGrowth { t: usize, lambda: f64 },

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Stable machine-readable code for the error JSON emitted by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Validation { .. } => "validation",
            Error::IndexGap { .. } => "index_gap",
            Error::InvalidSplit(_) => "invalid_split",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DenseCapExceeded { .. } => "dense_cap_exceeded",
            Error::CgNonConvergence { .. } => "cg_non_convergence",
            Error::ExplosiveGrowth { .. } => "explosive_growth",
            Error::OptimizationFailed(_) => "optimization_failed",
            Error::Other(_) => "other",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
