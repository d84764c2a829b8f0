use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("invalid sparse matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("power iteration did not converge in {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("quartic has no real root (coefficients {coefficients:?})")]
    NoRealRoot { coefficients: [f64; 5] },

    #[error("subproblem solve failed: {0}")]
    Subproblem(String),

    #[error("curvature oracle unavailable for this problem")]
    CurvatureUnavailable,

    #[error("degenerate instance: prescribed start undefined")]
    DegenerateStart,

    #[error("no telemetry: trace has no gradient snapshots")]
    NoTelemetry,

    #[error("iteration count {k} is below the certificate threshold {threshold}")]
    BelowThreshold { k: usize, threshold: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
