use std::fmt;
use std::path::Path;

use clmds::ClmdsError;

/// Failure reported to the user as one JSON line on stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.to_string(), message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new("io", format!("{}: {err}", path.display()))
    }

    /// `{"error": kind, "message": ...}` without newlines.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ClmdsError> for CliError {
    fn from(e: ClmdsError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

/// Reads a file, attaching the path to any error.
pub(crate) fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Core parse errors carry a line number but no file name.
pub(crate) fn in_file(path: &Path) -> impl Fn(ClmdsError) -> CliError + '_ {
    move |e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}
