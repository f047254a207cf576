//! Sparse hourly load forecasting: ingestion, Gaussian imputation,
//! statistical analysis, windowing, forecasting models and evaluation.

mod error;

pub mod data;
pub mod evaluation;
pub mod ingest;
pub mod interpolation;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod statistics;
pub mod windowing;

pub use error::{Error, Result};
