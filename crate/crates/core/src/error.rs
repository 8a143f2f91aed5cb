use thiserror::Error;

/// Errors raised by the solver, the oracles and the file loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty vector or matrix (dimension must be at least 1)")]
    Empty,

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from ({col}, {row})")]
    Asymmetric { row: usize, col: usize },

    #[error("matrix is not positive definite: pivot {pivot} is not positive")]
    NotPositiveDefinite { pivot: usize },

    #[error("zero divisor: {0}")]
    ZeroDivisor(&'static str),

    #[error("gradient {index} is zero")]
    ZeroGradient { index: usize },

    #[error("gradients {i} and {j} are not orthogonal (relative inner product {measured})")]
    NotOrthogonal { i: usize, j: usize, measured: f64 },

    #[error("affine weights sum to {sum}, not 1")]
    NotAffine { sum: String },

    #[error("linear system is inconsistent")]
    Inconsistent,

    #[error("breakdown: p^T H p = {curvature} is not positive")]
    Breakdown { curvature: String },

    #[error("invariant violated: {0}")]
    Invariant(&'static str),

    #[error("trace does not match the problem: {0}")]
    TraceMismatch(String),

    #[error("invalid number literal {0:?}")]
    ParseScalar(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
