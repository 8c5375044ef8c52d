use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index set J({dim},{degree}) has {cardinality} members, above the cap of {cap}")]
    IndexSetTooLarge {
        dim: usize,
        degree: usize,
        cardinality: u128,
        cap: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("root finder failed on branch {branch}: {reason}")]
    RootFinding { branch: usize, reason: String },

    #[error("eigensolve failed: {0}")]
    Eigensolve(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("Monte Carlo sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("problem too large for dense diagnostics: {size} unknowns (limit {limit})")]
    TooLarge { size: usize, limit: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
