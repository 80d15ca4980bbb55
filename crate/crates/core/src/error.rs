use thiserror::Error;

/// Errors raised by the estimators, mechanisms and generators.
#[derive(Debug, Error)]
pub enum DpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mechanism inapplicable: {0}")]
    MechanismInapplicable(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("composition mode error: {0}")]
    Mode(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("problem too large: {0}")]
    Scale(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl DpError {
    /// True for errors caused by bad input rather than by a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            DpError::InvalidParameter(_)
                | DpError::Config(_)
                | DpError::MechanismInapplicable(_)
                | DpError::EmptyInput(_)
                | DpError::Mode(_)
                | DpError::Scale(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, DpError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DpError {
    DpError::InvalidParameter(msg.into())
}
