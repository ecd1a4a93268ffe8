use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] brainscale::Error),

    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("run directory {dir} is incomplete: missing {missing}")]
    IncompleteRun { dir: PathBuf, missing: String },

    #[error("run directory {dir} holds results for {what} {found}, this run has {expected}; choose a fresh directory")]
    RunMismatch {
        dir: PathBuf,
        what: &'static str,
        found: String,
        expected: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CliError::Json { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        CliError::Csv { path: path.into(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "UsageError",
            CliError::Config(_) => "ConfigError",
            CliError::IncompleteRun { .. } => "IncompleteRun",
            CliError::RunMismatch { .. } => "RunMismatch",
            CliError::Io { .. } => "IoError",
            CliError::Json { .. } => "JsonError",
            CliError::Csv { .. } => "CsvError",
        }
    }

    /// The reader of stdout went away, as with `| head`.
    pub fn is_broken_pipe(&self) -> bool {
        let io = match self {
            CliError::Io { source, .. } => Some(source),
            CliError::Csv { source, .. } => match source.kind() {
                csv::ErrorKind::Io(e) => Some(e),
                _ => None,
            },
            _ => None,
        };
        io.is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            error: &'a str,
            message: String,
        }
        let payload = Payload {
            error: self.kind(),
            message: self.to_string(),
        };
        serde_json::to_string(&payload).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}
