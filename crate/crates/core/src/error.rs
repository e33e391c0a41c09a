use thiserror::Error;

/// Errors produced by the tracking pipeline and its tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("no estimate could be paired with ground truth")]
    NoPairs,

    #[error("scenario schema error: {0}")]
    Schema(String),

    #[error("malformed scan dump: {0}")]
    ScanFormat(String),

    #[error("tracker never initialized: {0}")]
    NoInit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Schema(_) | Error::Json(_) => 2,
            Error::NoInit(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
