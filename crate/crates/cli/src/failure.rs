use std::fmt;

use emocouple::{Error, ErrorKind};
use serde::Serialize;

/// A stage failure carrying its exit code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: "validation",
            exit_code: 2,
            message: message.into(),
        }
    }

    /// An upstream stage has not been run for this output directory.
    pub fn missing_upstream(path: &std::path::Path, stage: &str) -> Self {
        Self {
            kind: "missing_upstream_output",
            exit_code: 2,
            message: format!("{} not found; run `{stage}` first", path.display()),
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn code(&self) -> i32 {
        self.exit_code
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, exit_code) = match e.kind() {
            ErrorKind::Validation => ("validation", 2),
            ErrorKind::Data => ("data", 3),
            ErrorKind::Numeric => ("numeric", 4),
        };
        Self {
            kind,
            exit_code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| e.into().context(what))
    }
}

pub fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::validation(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}
