use std::fmt;

use fmapkit::Error;
use serde::Serialize;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_COMPUTE: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// Machine-readable failure record printed as one JSON line on stderr.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub stage: String,
    pub kind: String,
    pub cause: String,
    #[serde(rename = "exit_code")]
    pub code: u8,
}

impl CliError {
    pub fn config(cause: impl Into<String>) -> Self {
        CliError { stage: "config".into(), kind: "ConfigError".into(), cause: cause.into(), code: EXIT_CONFIG }
    }

    pub fn io(stage: &str, cause: impl Into<String>) -> Self {
        CliError { stage: stage.into(), kind: "IoError".into(), cause: cause.into(), code: EXIT_IO }
    }

    /// Wraps a library error raised while `stage` was running.
    pub fn at(stage: &str, e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Parse { .. } | Error::Format(_) | Error::Validation(_) => EXIT_IO,
            Error::InvalidParameter(_)
            | Error::Unsupported(_)
            | Error::InvalidResolventPoint { .. }
            | Error::Dimension(_)
            | Error::Index { .. } => EXIT_CONFIG,
            Error::Numerical(_)
            | Error::Convergence(_)
            | Error::DegenerateSpectrum(_)
            | Error::NotRescaled { .. }
            | Error::Solver { .. } => EXIT_COMPUTE,
        };
        CliError { stage: stage.into(), kind: e.kind().into(), cause: e.to_string(), code }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed ({}): {}", self.stage, self.kind, self.cause)
    }
}

/// Attach a stage to library results.
pub trait Stage<T> {
    fn stage(self, stage: &str) -> Result<T, CliError>;
}

impl<T> Stage<T> for fmapkit::Result<T> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::at(stage, e))
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::io(stage, e.to_string()))
    }
}
