use std::path::Path;

use thiserror::Error;

/// Exit status 1 for problems with the invocation or its inputs, 2 for
/// defects inside the tool.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::User(_) => 1,
            Self::Internal(_) => 2,
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        Self::User(msg.into())
    }

    /// Prefixes the message with a file path.
    pub fn at(self, path: &Path) -> Self {
        match self {
            Self::User(m) => Self::User(format!("{}: {m}", path.display())),
            Self::Internal(m) => Self::Internal(format!("{}: {m}", path.display())),
        }
    }
}

impl From<equilens::Error> for CliError {
    fn from(e: equilens::Error) -> Self {
        use equilens::Error as E;
        match e {
            E::InvarianceViolation(_) => Self::Internal(e.to_string()),
            _ => Self::User(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::User(format!("CSV: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::User(format!("JSON at line {} column {}: {e}", e.line(), e.column()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
