use thiserror::Error;

/// Errors raised by the numerical and inferential routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension {requested} exceeds the direction-number table ({available})")]
    UnsupportedDimension { requested: usize, available: usize },

    #[error("direction-number table is corrupt: {0}")]
    DirectionTable(String),

    #[error("standard error needs at least two replicates, got {0}")]
    InsufficientReplicates(usize),

    #[error("every importance weight underflowed; the orthant probability is below floating-point range")]
    DegenerateDenominator,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("design is rank deficient: {0}")]
    RankDeficient(String),

    #[error("the lasso selected no variables")]
    EmptyModel,

    #[error("H = Q2' Omega^-1 Q2 is numerically singular")]
    SingularH,

    #[error("effective sample size {ess:.1} fell below {floor}")]
    EffectiveSampleCollapse { ess: f64, floor: f64 },

    #[error("observed information is not positive definite (min eigenvalue {0:e})")]
    HessianNotPD(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
