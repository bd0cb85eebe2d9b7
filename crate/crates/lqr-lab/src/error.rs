use thiserror::Error;

/// Errors produced by synthesis, simulation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition (shapes, definiteness, grids).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Experiment or suite configuration is malformed.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The ILC correction subproblem is nonconvex and has no minimizer.
    #[error("nonconvex subproblem: {0}")]
    NonconvexSubproblem(String),

    /// A gain recursion hit a singular normal matrix.
    #[error("synthesis failure: {0}")]
    SynthesisFailure(String),

    /// A simulated state or cost left the representable range.
    #[error("numeric blowup: {0}")]
    NumericBlowup(String),

    /// A condition that cannot occur for valid inputs occurred anyway.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
