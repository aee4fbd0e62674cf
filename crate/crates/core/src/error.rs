use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FkError {
    /// A system, partition or parameter specification is malformed.
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// A textual specification failed to parse.
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    /// An operation was called with arguments outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// The input is valid but too large to process exactly.
    #[error("refused: {0}")]
    Refusal(String),

    /// A constructive procedure could not be carried out because a
    /// required inequality does not hold.
    #[error("construction failed: {0}")]
    Construction(String),
}

impl FkError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        FkError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn usage(message: impl Into<String>) -> Self {
        FkError::Usage(message.into())
    }
}

pub type Result<T> = std::result::Result<T, FkError>;
