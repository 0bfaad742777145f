use thiserror::Error;

/// Errors raised by the execution engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A liquidity profile failed validation. `field` names the offending input.
    #[error("invalid profile field `{field}`: {reason}")]
    InvalidProfile { field: String, reason: String },

    #[error("time {t} outside the admissible range [{lower}, {upper}]")]
    Domain { t: f64, lower: f64, upper: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported profile: {0}")]
    UnsupportedProfile(String),

    /// An analytic condition required by a closed-form route fails at time `t`.
    #[error("condition `{condition}` violated at t = {t}")]
    ConditionViolated { condition: String, t: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidProfile {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
