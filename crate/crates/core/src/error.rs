//! Error type shared across the crate.

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of particle construction, kernel evaluation, and the
/// iteration loop.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Two arrays that must agree in dimension do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An argument is outside its documented domain (negative counts,
    /// non-positive bandwidths, malformed covariance, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data that is syntactically valid but numerically unusable,
    /// e.g. all pairwise distances zero when selecting a bandwidth.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A requested operation exceeds a hard implementation limit.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A non-finite value appeared where a finite one is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A particle update produced a non-finite coordinate.
    #[error("numeric overflow updating particle {index}: {detail}")]
    NumericOverflow { index: usize, detail: String },

    /// The iteration blew up instead of settling.  Carries the residual
    /// history so the caller can see how the blow-up developed.
    #[error("iteration diverged after {iterations} steps (residual {residual:.3e})")]
    Divergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    /// An internal cross-check failed; indicates a bug, not bad input.
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
