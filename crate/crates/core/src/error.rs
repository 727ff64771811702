use crate::transport::SolveReport;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A point or direction lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two fields or operators were built on incompatible grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("restricted support is empty: {0}")]
    EmptySupport(String),

    /// The source iteration was refused or ran out of iterations. The report
    /// carries the spectral-radius estimate and the residual history.
    #[error(
        "transport solve did not converge (spectral radius estimate {:.4}, {} iterations)",
        .0.spectral_radius_estimate,
        .0.iterations
    )]
    NonConvergence(Box<SolveReport>),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
