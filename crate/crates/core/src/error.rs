use thiserror::Error;

/// Errors raised by the algebra, functional, channel and decision layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),

    #[error("algebra mismatch: {left:?} vs {right:?}")]
    AlgebraMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("not hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("not positive (minimum eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("not a state: {0}")]
    NotState(String),

    #[error("not completely positive (Choi block {block} has eigenvalue {eigenvalue:.3e})")]
    NotCompletelyPositive { block: usize, eigenvalue: f64 },

    #[error("ideal lattice too large: {blocks} blocks exceeds enumeration cap {cap}")]
    IdealLatticeTooLarge { blocks: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
