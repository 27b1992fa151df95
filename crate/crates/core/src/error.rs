use thiserror::Error;

/// Errors raised by projlat operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid projection: {0}")]
    InvalidProjection(String),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("projections are not in the triangle relation")]
    NotTriangle,

    #[error("projection is not a midpoint: {0}")]
    NotMidpoint(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("oracle call budget of {budget} exceeded")]
    BudgetExceeded { budget: usize },

    #[error("inconsistent oracle: {0}")]
    InconsistentOracle(String),

    #[error("probe not available in oracle directory: {0}")]
    MissingProbe(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
