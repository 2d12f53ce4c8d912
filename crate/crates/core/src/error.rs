use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dense materialization needs {entries} entries, cap is {cap}")]
    TooLarge { entries: usize, cap: usize },

    #[error("coefficient factor (term {term}, dim {dim}) is not positive at x = {x}: {value}")]
    NonPositiveCoefficient {
        term: usize,
        dim: usize,
        x: f64,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not a separable sum of one-dimensional factors: {0}")]
    NotSeparable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid coefficient file: {0}")]
    InvalidCoefficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
