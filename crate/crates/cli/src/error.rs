use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration; `pointer` locates the offending value.
    #[error("config error at '{pointer}': {message}")]
    Config { pointer: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] uwoc_core::Error),

    #[error(transparent)]
    Ml(#[from] uwoc_ml::Error),

    #[error(transparent)]
    Aborted(#[from] uwoc_ml::switchopt::Aborted),

    /// Malformed JSON input other than the run configuration.
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn config(pointer: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config { pointer: pointer.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Core(uwoc_core::Error::Parse { .. }) | CliError::Input { .. } => "parse",
            CliError::Core(uwoc_core::Error::Io { .. }) => "io",
            CliError::Core(uwoc_core::Error::Domain(_)) => "domain",
            CliError::Core(_) | CliError::Ml(_) => "contract",
            CliError::Aborted(_) => "aborted",
        }
    }

    /// One JSON object suitable for a single stderr line.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() });
        match self {
            CliError::Config { pointer, .. } => v["pointer"] = json!(pointer),
            CliError::Io { path, .. } | CliError::Input { path, .. } => v["path"] = json!(path),
            CliError::Core(uwoc_core::Error::Parse { path, line, .. }) => {
                v["path"] = json!(path);
                v["line"] = json!(line);
            }
            CliError::Core(uwoc_core::Error::Io { path, .. }) => v["path"] = json!(path),
            CliError::Aborted(a) => v["completed_evaluations"] = json!(a.trace.len()),
            _ => {}
        }
        v
    }
}
