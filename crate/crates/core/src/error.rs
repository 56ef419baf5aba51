use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown geometry `{0}`")]
    UnknownGeometry(String),

    #[error("non-manifold connectivity: facet {vertices:?} has {count} incident cells")]
    NonManifold { vertices: Vec<usize>, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point lies outside cell {cell} (smallest barycentric coordinate {min_bary:e})")]
    PointOutsideCell { cell: usize, min_bary: f64 },

    #[error("saddle matrix is singular: {0}")]
    SingularSystem(String),

    #[error("eigensolver did not converge after {restarts} restarts (worst relative residual {residual:e})")]
    NoConvergence { restarts: usize, residual: f64 },

    #[error("found only {found} of {requested} requested eigenvalues")]
    TooFewEigenvalues { found: usize, requested: usize },

    #[error("estimator field is identically zero")]
    ZeroEstimator,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
