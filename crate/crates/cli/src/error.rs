use std::fmt;

use fk_core::FkError;

/// Failure of a run, with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Malformed flags, config lines or specs.
    Parse(String),
    /// Well-formed but invalid arguments.
    Usage(String),
    /// Inputs beyond the exact solvers' size limits.
    Refusal(String),
    Io(String),
    /// A constructive step failed on otherwise valid input.
    Construction(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Construction(_) => 1,
            CliError::Parse(_) | CliError::Usage(_) => 2,
            CliError::Refusal(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Refusal(m) => write!(f, "refused: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Construction(m) => write!(f, "construction failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<FkError> for CliError {
    fn from(e: FkError) -> Self {
        match e {
            FkError::Parse { .. } | FkError::Config { .. } => CliError::Parse(e.to_string()),
            FkError::Usage(m) => CliError::Usage(m),
            FkError::Refusal(m) => CliError::Refusal(m),
            FkError::Construction(m) => CliError::Construction(m),
        }
    }
}
