use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ingest error at row {row}: {detail}")]
    Ingest { row: usize, detail: String },
    #[error("join error: {0}")]
    Join(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("sparsity error: {0}")]
    Sparsity(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("binning error: {0}")]
    Binning(String),
    #[error("fit error: {detail} (last objective {last_objective:e})")]
    Fit { detail: String, last_objective: f64 },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Nn(#[from] sparseload_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
