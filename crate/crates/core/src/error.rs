use thiserror::Error;

pub type Result<T, E = CkpcaError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkpcaError {
    #[error("every column has zero sample variance; bandwidth would be 0")]
    AllConstantData,
    #[error("kernel bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid segment length {alpha} for n = {n} (need 2 <= alpha <= n/2 and n >= 4)")]
    InvalidAlpha { n: usize, alpha: usize },
    #[error("segment {segment} has {size} observations; at least 2 are required")]
    SegmentTooSmall { segment: usize, size: usize },
    #[error("category {category} has {size} observations; at least 2 are required")]
    CategoryTooSmall { category: usize, size: usize },
    #[error("gram matrix has rank 0")]
    DegenerateGram,
    #[error("n = {0} is too small for the default ridge (need n >= 16)")]
    NTooSmall(usize),
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("series of length {n} is too short for min_size {min_size}")]
    TooShort { n: usize, min_size: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("covariance is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("degrees of freedom must be positive and finite, got {0}")]
    BadDf(f64),
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("no replication records to aggregate")]
    Empty,
    #[error("eigendecomposition failed to converge")]
    EigenFailure,
}
