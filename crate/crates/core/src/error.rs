use thiserror::Error;

/// Errors raised by the numerical laboratory.
///
/// Every variant names the module and the parameter that failed so that the
/// command-line driver can map it onto an exit code and a readable message.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{module}: invalid parameter `{param}`: {reason}")]
    Parameter {
        module: &'static str,
        param: &'static str,
        reason: String,
    },
    #[error("{module}: geometry error: {reason}")]
    Geometry { module: &'static str, reason: String },
    #[error("{module}: numeric failure: {reason}")]
    Numeric { module: &'static str, reason: String },
    #[error("spectral: matrix dimension {dim} exceeds dense limit {limit}; use the counting path")]
    Size { dim: usize, limit: usize },
    #[error("{module}: {reason}")]
    State { module: &'static str, reason: String },
    #[error("{module}: insufficient data: {reason}")]
    InsufficientData { module: &'static str, reason: String },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(module: &'static str, param: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            module,
            param,
            reason: reason.into(),
        }
    }

    pub(crate) fn geometry(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Geometry {
            module,
            reason: reason.into(),
        }
    }

    pub(crate) fn numeric(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Numeric {
            module,
            reason: reason.into(),
        }
    }

    pub(crate) fn state(module: &'static str, reason: impl Into<String>) -> Self {
        Error::State {
            module,
            reason: reason.into(),
        }
    }

    pub(crate) fn insufficient(module: &'static str, reason: impl Into<String>) -> Self {
        Error::InsufficientData {
            module,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical kernels (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
