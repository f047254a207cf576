//! Experiment configuration and its validation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sparseload_core::ingest::{CsvSchema, SyntheticSpec};
use sparseload_core::models::{ModelKind, ModelSettings};
use sparseload_core::windowing::WindowConfig;

use crate::error::CliError;

/// Version of every JSON document the CLI reads or writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Masking rate applied to synthetic series by default.
pub const DEFAULT_SPARSITY: f64 = 0.6245;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Upper clipping bound for imputed loads. Defaults to the synthetic
    /// capacity, or the largest observed load for CSV input.
    #[serde(default)]
    pub capacity_kw: Option<f64>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    /// Partial overrides on top of the desk or full-scale settings.
    #[serde(default)]
    pub settings: Value,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub paper_scale: bool,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Model pairs compared with Bland–Altman agreement.
    #[serde(default = "default_agreement")]
    pub agreement: Vec<(ModelKind, ModelKind)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
        #[serde(default = "default_sparsity")]
        sparsity: f64,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "CsvSchema::dayton")]
        schema: CsvSchema,
        #[serde(default)]
        weather: Option<PathBuf>,
        #[serde(default)]
        holidays: Option<PathBuf>,
        /// Inclusive hour-of-day interval; all hours operate when absent.
        #[serde(default)]
        operating_hours: Option<(u32, u32)>,
        /// Extra masking applied after loading, to simulate sparsity.
        #[serde(default)]
        sparsity: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.66, val: 0.17 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub acf_max_lag: usize,
    /// Seasonal period of the decomposition in rows; the number of
    /// operating hours per day when absent.
    pub period: Option<usize>,
    pub kde_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { acf_max_lag: 168, period: None, kde_points: 200 }
    }
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::BENCHMARK.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_agreement() -> Vec<(ModelKind, ModelKind)> {
    vec![(ModelKind::Lstm, ModelKind::BiLstm)]
}

fn default_sparsity() -> f64 {
    DEFAULT_SPARSITY
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config { field: field.into(), message: message.into() }
}

/// A validated configuration and the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub settings: ModelSettings,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}

fn merge(base: &mut Value, overrides: &Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Resolves the model settings: the desk or full-scale defaults with the
/// configured overrides merged on top.
pub fn model_settings(config: &RunConfig) -> Result<ModelSettings, CliError> {
    if !(config.settings.is_null() || config.settings.is_object()) {
        return Err(invalid("settings", "must be an object"));
    }
    let base = if config.paper_scale { ModelSettings::paper_scale() } else { ModelSettings::desk() };
    let mut value = serde_json::to_value(base)?;
    if config.settings.is_object() {
        merge(&mut value, &config.settings);
    }
    serde_path_to_error::deserialize::<_, ModelSettings>(value).map_err(|e| {
        let path = e.path().to_string();
        invalid(format!("settings.{path}"), e.into_inner().to_string())
    })
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| invalid("", format!("not valid JSON: {e}")))?;
    let Some(object) = value.as_object() else {
        return Err(invalid("", "config must be a JSON object"));
    };
    for required in ["schema_version", "seed", "data"] {
        if !object.contains_key(required) {
            return Err(invalid(required, "missing required field"));
        }
    }
    let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        invalid(path, e.into_inner().to_string())
    })?;
    let settings = model_settings(&config)?;
    let loaded = LoadedConfig { config, settings, base_dir: base_dir.to_path_buf() };
    validate(&loaded)?;
    Ok(loaded)
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("", format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

fn check_file(loaded: &LoadedConfig, field: &str, path: &Path) -> Result<(), CliError> {
    let full = loaded.resolve(path);
    if !full.is_file() {
        return Err(invalid(field, format!("file {} does not exist", full.display())));
    }
    Ok(())
}

fn check_fraction(field: &str, v: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(field, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

fn validate(loaded: &LoadedConfig) -> Result<(), CliError> {
    let c = &loaded.config;
    if c.schema_version != SCHEMA_VERSION {
        return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", c.schema_version)));
    }
    match &c.data {
        DataSource::Synthetic { spec, sparsity } => {
            spec.validate().map_err(|e| invalid("data.spec", e.to_string()))?;
            check_fraction("data.sparsity", *sparsity)?;
        }
        DataSource::Csv { path, weather, holidays, operating_hours, sparsity, schema } => {
            check_file(loaded, "data.path", path)?;
            if let Some(w) = weather {
                check_file(loaded, "data.weather", w)?;
            }
            if let Some(h) = holidays {
                check_file(loaded, "data.holidays", h)?;
            }
            if let Some((a, b)) = operating_hours {
                if a > b || *b > 23 {
                    return Err(invalid("data.operating_hours", format!("{a}..={b} is not an hour interval")));
                }
            }
            if !(schema.scale.is_finite() && schema.scale > 0.0) {
                return Err(invalid("data.schema.scale", "must be positive"));
            }
            check_fraction("data.sparsity", *sparsity)?;
        }
    }
    if let Some(cap) = c.capacity_kw {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(invalid("capacity_kw", "must be positive"));
        }
    }
    if c.models.is_empty() {
        return Err(invalid("models", "at least one model is required"));
    }
    let unique: BTreeSet<_> = c.models.iter().collect();
    if unique.len() != c.models.len() {
        return Err(invalid("models", "models are listed more than once"));
    }
    for (i, (a, b)) in c.agreement.iter().enumerate() {
        if a == b {
            return Err(invalid(format!("agreement[{i}]"), "a model cannot be compared with itself"));
        }
    }
    if c.window.seq_len == 0 || c.window.pred_len == 0 {
        return Err(invalid("window", "seq_len and pred_len must be positive"));
    }
    let s = c.split;
    if !(s.train > 0.0 && s.val > 0.0 && s.train + s.val < 1.0) {
        return Err(invalid("split", "fractions must be positive and sum below 1"));
    }
    if c.analysis.acf_max_lag == 0 || c.analysis.kde_points < 2 {
        return Err(invalid("analysis", "acf_max_lag must be positive and kde_points at least 2"));
    }
    if c.analysis.period.is_some_and(|p| p < 2) {
        return Err(invalid("analysis.period", "must be at least 2"));
    }
    let settings = &loaded.settings;
    let arch = sparseload_core::models::ArchSpec { seq_len: c.window.seq_len, pred_len: c.window.pred_len, ..settings.arch.clone() };
    arch.validate().map_err(|e| invalid("settings.arch", e.to_string()))?;
    settings.tabular.validate().map_err(|e| invalid("settings.tabular", e.to_string()))?;
    let t = &settings.train;
    if t.batch_size == 0 || t.epochs == 0 || !(t.learning_rate > 0.0) {
        return Err(invalid("settings.train", "batch_size, epochs and learning_rate must be positive"));
    }
    Ok(())
}

/// Parses `SPARSELOAD_THREADS`; unset means all available cores.
pub fn worker_threads(raw: Option<&str>) -> Result<usize, CliError> {
    match raw {
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(invalid("SPARSELOAD_THREADS", format!("{s:?} is not a positive integer"))),
        },
    }
}
