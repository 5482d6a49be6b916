use thiserror::Error;

/// Errors raised by the exponential-weights library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EwError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("covariance is degenerate: condition number {0:e} exceeds 1e12")]
    IllConditioned(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("learning-rate schedule must be positive and nonincreasing (violated at round {round})")]
    NonMonotoneSchedule { round: usize },

    #[error("learning-rate schedule exhausted at round {round} (horizon {horizon})")]
    ScheduleExhausted { round: usize, horizon: usize },

    #[error("loss `{loss}` is not conjugate-compatible with the {family} family")]
    IncompatibleLoss { loss: &'static str, family: &'static str },

    #[error("projecting a {family} posterior onto {domain} is not supported")]
    UnsupportedProjection { family: &'static str, domain: &'static str },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("mirror map is not invertible at the given point: {0}")]
    MirrorMapDomain(String),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("prod surrogate undefined: 1 + eta * r = {0} is not positive")]
    NonPositiveProdFactor(f64),

    #[error("second-moment estimate is undersupplied: min eigenvalue {got:e} < required {required:e}")]
    MomentUndersupplied { got: f64, required: f64 },

    #[error("observed loss {0} outside [-1, 1]")]
    LossOutOfRange(f64),
}

pub type Result<T> = std::result::Result<T, EwError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> EwError {
    EwError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EwError::DimensionMismatch { expected, got })
    }
}
