use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("series did not converge within {max_terms} terms ({context})")]
    NonConvergence { max_terms: usize, context: String },

    #[error("operators are not permutable: ||AB - BA|| = {commutator_norm:e}")]
    NotPermutable { commutator_norm: f64 },

    #[error("growth bound violated at {count} node(s); first at s = {first_time} ({which})")]
    BoundViolation {
        count: usize,
        first_time: f64,
        which: &'static str,
    },

    #[error("growth envelope (M = {m}, omega = {omega}) does not dominate ||C(t;A)|| at t = {time}")]
    EnvelopeViolation { m: f64, omega: f64, time: f64 },

    #[error("grid too coarse: need at least {required} steps, have {steps}")]
    GridTooCoarse { required: usize, steps: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
