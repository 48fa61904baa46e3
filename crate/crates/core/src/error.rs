//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input matrices or vectors have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A Lyapunov/Sylvester equation is singular (resonant spectra) or too
    /// ill-conditioned to solve to the contracted residual.
    #[error("singular matrix equation: {0}")]
    SingularEquation(String),

    /// A matrix expected to be symmetric positive semidefinite is not.
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// A matrix expected to be symmetric positive definite is not.
    #[error("matrix is not positive definite: {0}")]
    NotPd(String),

    /// The system matrix has eigenvalues outside the open left half-plane.
    /// Infinite-horizon Gramians do not exist; use the time-limited variant.
    #[error("system matrix is not stable (max Re(eig) = {abscissa:.3e}); use the time-limited variant")]
    Unstable { abscissa: f64 },

    /// A truncation rank exceeding the numerical Hankel rank was requested.
    #[error("requested rank {requested} exceeds the numerical Hankel rank {available}")]
    RankTooLarge { requested: usize, available: usize },

    /// The system carries no reachable/observable energy (zero Gramian).
    #[error("degenerate system: {0}")]
    Degenerate(String),

    /// A quantity violated an identity beyond the tolerated roundoff.
    #[error("numerical inconsistency: {0}")]
    Inconsistent(String),

    /// The prior mean does not lie in the range of the covariance factor.
    #[error("prior mean is not in the range of the prior covariance factor")]
    MeanOutsideRange,

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A configuration value failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Failure while reading or parsing an external file.
    #[error("i/o error: {0}")]
    Io(String),

    /// An error from a constituent step, annotated with where it happened.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, unwrapping any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
