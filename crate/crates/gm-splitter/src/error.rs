//! Command failures and their exit codes.

use std::fmt;

/// What went wrong, by exit code: 1 usage, 2 config, 3 missing dependency, 4 runtime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Config(String),
    MissingDependency(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::MissingDependency(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::MissingDependency(_) => "missing_dependency",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Config(m)
            | CliError::MissingDependency(m)
            | CliError::Runtime(m) => m,
        }
    }

    /// One JSON object on one line, e.g.
    /// `{"error":"config","code":2,"message":"split.num_splits: ..."}`.
    pub fn to_line(&self) -> String {
        let flat: String = self
            .message()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        serde_json::json!({ "error": self.kind(), "code": self.code(), "message": flat })
            .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<gm_splitter_core::Error> for CliError {
    fn from(e: gm_splitter_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
