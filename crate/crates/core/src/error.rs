use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported derivative order {order} (at most 2)")]
    UnsupportedOrder { order: usize },

    #[error("parity violation: boundary trace {trace:e} exceeds tolerance {tolerance:e}")]
    ParityViolation { trace: f64, tolerance: f64 },

    #[error("grid incompatible with exact nodal translation: dx1 = {dx1}, dx' = {dxp}")]
    GridIncompatible { dx1: f64, dxp: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance: estimate {estimate:e}, error {error:e}")]
    Accuracy { estimate: f64, error: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite state at path {path}, step {step}")]
    BlowUp { path: usize, step: usize },

    #[error("empty field")]
    EmptyField,

    #[error("degenerate pair set: {0}")]
    DegeneratePairs(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
