use thiserror::Error;

/// Errors raised by the accounting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GdpError {
    /// An argument lies outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The implicit μ exceeds the binary-search ceiling.
    #[error("not {mu_max}-GDP: delta {delta:e} at eps {eps} exceeds the ceiling curve")]
    CeilingExceeded { mu_max: f64, eps: f64, delta: f64 },

    #[error("overflow guard: k * eps = {0} exceeds 300")]
    OverflowGuard(f64),

    /// A tabulated profile failed validation; `line` is 1-based and counts the header.
    #[error("profile file line {line}: {message}")]
    Load { line: u64, message: String },
}

pub type Result<T> = std::result::Result<T, GdpError>;

pub(crate) fn domain(msg: impl Into<String>) -> GdpError {
    GdpError::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> GdpError {
    GdpError::InvalidParameter(msg.into())
}
