use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    Dimension {
        context: String,
        left: String,
        right: String,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("empty transfer: no prompt entry reached the activation threshold")]
    EmptyTransfer,
    #[error("undefined recall: class {0} has no true samples")]
    UndefinedRecall(usize),
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn dimension(context: impl Into<String>, left: impl ToString, right: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    /// Process exit code per the CLI contract: 1 for validation errors, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Checksum(_) => 2,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
