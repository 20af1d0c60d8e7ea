use thiserror::Error;

#[derive(Debug, Error)]
pub enum UlmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl UlmError {
    /// Short machine-readable tag, used in the CLI's single-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            UlmError::InvalidParameter(_) => "invalid_parameter",
            UlmError::InvalidInput(_) => "invalid_input",
            UlmError::FitFailed(_) => "fit_failed",
            UlmError::Format(_) => "format",
            UlmError::Config(_) => "config",
            UlmError::Io(_) => "io",
        }
    }
}

impl From<csv::Error> for UlmError {
    fn from(e: csv::Error) -> Self {
        UlmError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, UlmError>;

pub(crate) fn invalid_param(msg: impl Into<String>) -> UlmError {
    UlmError::InvalidParameter(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> UlmError {
    UlmError::InvalidInput(msg.into())
}
