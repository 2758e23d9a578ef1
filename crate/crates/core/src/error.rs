use thiserror::Error;

/// Errors raised by the manifold layer, the mixture factors and the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("manifold kind mismatch: {0} vs {1}")]
    KindMismatch(String, String),

    #[error("logarithm undefined at rotation angle {angle} (too close to pi)")]
    LogSingularity { angle: f64 },

    #[error("matrix is not a proper rotation: {0}")]
    InvalidRotation(String),

    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("a Gaussian mixture needs at least one component")]
    EmptyMixture,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("square-root argument {value:e} is negative in {context}")]
    NegativeSqrtArgument { value: f64, context: &'static str },

    #[error("factor {factor} produced a non-finite {what}")]
    NonFinite { factor: usize, what: &'static str },

    #[error("Hessian is rank deficient (eigenvalues in [{min_eig:e}, {max_eig:e}])")]
    RankDeficient { min_eig: f64, max_eig: f64 },

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("cost became non-finite at iteration {iteration}")]
    NonFiniteCost { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
