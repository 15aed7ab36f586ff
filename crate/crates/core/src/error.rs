use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame is rank deficient (relative singular value {0:e})")]
    RankDeficient(f64),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("point lies outside the model domain")]
    OutOfDomain,
    #[error("singular linear system (|det| = {0:e})")]
    SingularSystem(f64),
    #[error("plane is not a graph over the reference splitting")]
    NotAGraph,
    #[error("no hyperbolic integer matrix of size {0} found within the search budget")]
    NoSuchAutomorphism(usize),
    #[error("fold patch does not meet the leaf family on the search interval")]
    EmptyIntersection,
    #[error("sweep detector needs an elliptic fold of codimension one")]
    NotElliptic,
    #[error("iterate left the search domain")]
    LeftDomain,
    #[error("reconstruction residual {0:e} above tolerance")]
    Reconstruction(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
