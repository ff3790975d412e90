use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("multi-index set is not downward closed")]
    NotDownwardClosed,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    /// Gram matrix too far from the identity; `level` is set when the failure
    /// happened inside a multilevel fit.
    #[error("ill-conditioned least-squares system: ||G - I|| = {deviation:.4} (level {level:?})")]
    Conditioning { deviation: f64, level: Option<usize> },

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("cell (k={0}, l={1}) is not in the index set")]
    UnknownCell(usize, usize),

    #[error("unsupported artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
