use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("undefined value: {0}")]
    UndefinedValue(String),
    #[error("resource limit exceeded in {component}: needs {required}, cap is {cap}")]
    ResourceLimit {
        component: String,
        required: String,
        cap: String,
    },
    #[error("wrong mode: {0}")]
    WrongMode(String),
    #[error("degenerate instance: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameters(msg.into())
    }

    pub(crate) fn limit(
        component: impl Into<String>,
        required: impl ToString,
        cap: impl ToString,
    ) -> Self {
        Error::ResourceLimit {
            component: component.into(),
            required: required.to_string(),
            cap: cap.to_string(),
        }
    }
}
