use std::path::PathBuf;

/// Errors produced anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value during {context}")]
    Numeric { context: String },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("no action available: {0}")]
    NoAction(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("demonstration collection failed: {0}")]
    CollectionFailure(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dependency: expected {}", .0.display())]
    Dependency(PathBuf),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(context: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
