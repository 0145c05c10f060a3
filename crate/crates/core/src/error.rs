use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants are grouped by how a caller is expected to react: bad input,
/// a violated theorem hypothesis, or a computation that could not decide.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("unsupported kernel shape: {0}")]
    UnsupportedShape(String),

    #[error("radius {radius} must exceed half the generator length sum {bound}")]
    RadiusTooSmall { radius: f64, bound: f64 },

    #[error("point is not on the lattice (residual {residual:e})")]
    NotALatticePoint { residual: f64 },

    #[error("search frontier exceeded node cap {cap}")]
    CapExceeded { cap: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("cell average diverges at offset {offset:?}")]
    InfiniteWeight { offset: Vec<i64> },

    #[error("insufficient kernel positivity: {0}")]
    InsufficientPositivity(String),

    #[error("link {index} could not be certified: {reason}")]
    LinkCertification { index: usize, reason: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by a theorem hypothesis not holding on the
    /// given instance (as opposed to bad input or an undecided computation).
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(self, Error::HypothesisViolation(_))
    }

    /// True when the computation could not decide within its budget.
    pub fn is_inconclusive(&self) -> bool {
        matches!(
            self,
            Error::Inconclusive(_)
                | Error::NoConvergence { .. }
                | Error::CapExceeded { .. }
                | Error::InsufficientPositivity(_)
                | Error::LinkCertification { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
