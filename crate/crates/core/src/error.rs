use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid pattern registry: {0}")]
    Registry(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("positivity unverifiable: no complete-case row in the data")]
    PositivityUnverifiable,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid weights: complete-case probability {value:.3e} at row {row} is not positive")]
    InvalidWeights { row: usize, value: f64 },

    #[error("singular jacobian (reciprocal condition {rcond:.3e})")]
    SingularJacobian { rcond: f64 },

    #[error("infeasible start: no parameter vector satisfying the complete-case constraint was found")]
    InfeasibleStart,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
