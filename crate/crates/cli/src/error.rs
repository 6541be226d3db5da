use std::fmt;
use std::path::Path;

use serde_json::json;

use crate::output::SCHEMA_VERSION;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// A failure reported as JSON on stderr with a matching exit status.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub code: &'static str,
    pub message: String,
    pub exit: i32,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { module: "config", code: "invalid_config", message: message.into(), exit: EXIT_CONFIG }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError { module: "cli", code: "io", message: format!("{}: {err}", path.display()), exit: EXIT_DATA }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "module": self.module, "code": self.code, "message": self.message, "exit_code": self.exit },
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}: {}", self.module, self.code, self.message)
    }
}

impl From<akm_core::Error> for CliError {
    fn from(e: akm_core::Error) -> Self {
        let exit = if matches!(e, akm_core::Error::InvalidConfig(_)) {
            EXIT_CONFIG
        } else if e.is_numerical() {
            EXIT_NUMERICAL
        } else {
            EXIT_DATA
        };
        CliError { module: e.module(), code: e.code(), message: e.to_string(), exit }
    }
}
