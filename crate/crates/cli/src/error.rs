use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

use crate::config::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] sparseload_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("missing artifact {}: run `train` first", path.display())]
    MissingArtifact { path: PathBuf },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for configuration problems, 1 for everything that fails at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config { field, message } => json!({
                "schema_version": SCHEMA_VERSION,
                "error": "config",
                "field": field,
                "message": message,
            }),
            other => json!({
                "schema_version": SCHEMA_VERSION,
                "error": "runtime",
                "message": other.to_string(),
            }),
        }
    }
}
