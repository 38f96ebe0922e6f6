use serde::Serialize;
use thiserror::Error;

use lobadv::attacks::AttackError;
use lobadv::book::BookError;
use lobadv::data::DataError;
use lobadv::metrics::ReportError;
use lobadv::models::ModelError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("attack error: {0}")]
    Attack(#[from] AttackError),
    #[error("report error: {0}")]
    Report(#[from] ReportError),
    #[error("book error: {0}")]
    Book(#[from] BookError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) | CliError::Book(_) => "data",
            CliError::Model(_) => "model",
            CliError::Attack(_) => "attack",
            CliError::Report(_) => "report",
            CliError::Io { .. } => "io",
            CliError::ReplayMismatch(_) => "replay",
        }
    }

    /// 2 for configuration errors, 3 for data errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "data" => 3,
            _ => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind().to_string(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

/// Machine-readable failure written to stderr as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
}
