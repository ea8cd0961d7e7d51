use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("unsupported unit conversion {from} -> {to}")]
    UnsupportedUnit { from: String, to: String },

    #[error("stage vector length {found} does not match K = {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite state at t = {t} h ({what})")]
    NonFinite { t: f64, what: String },

    #[error("CFL violation: dt = {dt} h exceeds da = {da} h")]
    CflViolation { dt: f64, da: f64 },

    #[error("invalid age mesh: {0}")]
    InvalidMesh(String),

    #[error("parasitemia undefined: total RBC density is zero")]
    ZeroDenominator,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-positive {what} {value} at t = {t} d")]
    NonPositive { t: f64, value: f64, what: String },

    #[error("{0} is outside the validity window")]
    OutOfRange(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures raised by the numerics themselves (blow-up, degenerate
    /// regression input) as opposed to bad configuration or bad files.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::ZeroDenominator | Error::InsufficientData(_) | Error::NonPositive { .. }
        )
    }
}
