use thiserror::Error;

/// Errors produced by the solvers, distributions and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// Instance or distribution parameters violate their invariants.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A schedule was rejected (budget violation, mismatched parameters).
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// A numerical routine failed to converge or bracket.
    #[error("numeric failure in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    /// An enumeration would exceed the state-space guard.
    #[error("state space of {states} exceeds guard {guard}")]
    StateSpace { states: f64, guard: f64 },

    /// Serialized input could not be decoded.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op,
            detail: detail.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
