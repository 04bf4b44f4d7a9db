use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum LabError {
    /// A caller-supplied parameter is out of range or inconsistent.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A quadrature or root-finding routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A point/domain mismatch (wrong dimension, point outside domain, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The requested quantity is not available for this model
    /// (e.g. no potential density, recurrent process).
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// Evaluation at a singular configuration (x = y for a Green function).
    #[error("singularity: {0}")]
    Singularity(String),

    /// A grid search finished without finding a valid witness.
    #[error("search failure: {0}")]
    SearchFailure(String),

    /// A Monte Carlo ratio whose denominator is consistent with zero.
    #[error("unstable ratio: {0}")]
    UnstableRatio(String),

    /// A degenerate experiment configuration (e.g. zero-mass harmonic).
    #[error("degenerate experiment: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
