use thiserror::Error;

/// Errors produced by the pooling kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// Input contains NaN/Inf or is otherwise malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operand dimensions are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// A matrix required to be positive semidefinite has an eigenvalue
    /// below the negative tolerance.
    #[error("matrix is not positive semidefinite: {0}")]
    NotPSD(String),

    /// A matrix required to be strictly positive definite is singular or
    /// indefinite.
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSPD(String),

    /// The Jacobi sweep budget was exhausted before the off-diagonal mass
    /// fell under tolerance.
    #[error("eigendecomposition did not converge within {0} sweeps")]
    ConvergenceError(usize),

    /// An input whose normalizer vanishes (e.g. the zero matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A normalization scale evaluates to zero.
    #[error("degenerate normalizer: {0}")]
    DegenerateNormalizer(String),

    /// A coupled iteration produced non-finite values.
    #[error("iteration diverged: {0}")]
    DivergenceError(String),

    /// A cached context does not match the gradient it was applied to.
    #[error("invalid context: {0}")]
    InvalidContext(String),

    /// Configuration violates a structural constraint.
    #[error("invalid configuration: {0}")]
    ConfigError(String),

    /// A matrix or weight file could not be parsed.
    #[error("parse error: {0}")]
    ParseError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
