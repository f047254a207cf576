//! Config-driven pipeline behind the `sparseload` command.

pub mod config;
mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{load_config, parse_config, worker_threads, LoadedConfig, RunConfig, SCHEMA_VERSION};
pub use error::CliError;
pub use pipeline::{execute, Command, Summary};
