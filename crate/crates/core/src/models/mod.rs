//! Forecasting models and a common interface over trained variants.
//!
//! Every model predicts the load at the first target row of a window from
//! the actual loads before it, so all variants are evaluated on the same
//! one-step-ahead targets.

pub mod features;
pub mod neural;
pub mod prophet;
pub mod sarima;
pub mod tree;

use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::windowing::{Split, WindowedDataset};

pub use features::{extract_tabular_features, TabularSpec};
pub use neural::{ArchSpec, EpochLog, NeuralModel, NeuralVariant, TrainConfig};
pub use prophet::{fit_prophet_lite, ProphetConfig, ProphetLiteModel};
pub use sarima::{fit_sarima, SarimaConfig, SarimaModel};
pub use tree::{fit_gbt, fit_random_forest, ForestConfig, ForestModel, GbtConfig, GbtModel, Matrix};

/// Version of the JSON model document.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lstm,
    #[serde(rename = "bilstm")]
    BiLstm,
    CnnLstm,
    #[serde(rename = "cnn_bilstm")]
    CnnBiLstm,
    Transformer,
    #[serde(rename = "dlinear")]
    DLinear,
    Sarima,
    Prophet,
    Xgboost,
    RandomForest,
    /// Last observed load; a reference baseline.
    Persistence,
}

impl ModelKind {
    /// The ten compared forecasters.
    pub const BENCHMARK: [ModelKind; 10] = [
        ModelKind::Lstm,
        ModelKind::BiLstm,
        ModelKind::CnnLstm,
        ModelKind::CnnBiLstm,
        ModelKind::Transformer,
        ModelKind::DLinear,
        ModelKind::Sarima,
        ModelKind::Prophet,
        ModelKind::Xgboost,
        ModelKind::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::BiLstm => "bilstm",
            ModelKind::CnnLstm => "cnn_lstm",
            ModelKind::CnnBiLstm => "cnn_bilstm",
            ModelKind::Transformer => "transformer",
            ModelKind::DLinear => "dlinear",
            ModelKind::Sarima => "sarima",
            ModelKind::Prophet => "prophet",
            ModelKind::Xgboost => "xgboost",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Persistence => "persistence",
        }
    }

    pub fn neural_variant(self) -> Option<NeuralVariant> {
        Some(match self {
            ModelKind::Lstm => NeuralVariant::Lstm,
            ModelKind::BiLstm => NeuralVariant::BiLstm,
            ModelKind::CnnLstm => NeuralVariant::CnnLstm,
            ModelKind::CnnBiLstm => NeuralVariant::CnnBiLstm,
            ModelKind::Transformer => NeuralVariant::Transformer,
            ModelKind::DLinear => NeuralVariant::DLinear,
            _ => return None,
        })
    }

    pub fn is_neural(self) -> bool {
        self.neural_variant().is_some()
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::BENCHMARK
            .iter()
            .chain(&[ModelKind::Persistence])
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown model {s:?}")))
    }
}

/// Settings for every model family; each model reads the part it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    /// Neural architecture; its variant is replaced by the requested model.
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub sarima: SarimaConfig,
    pub prophet: ProphetConfig,
    pub tabular: TabularSpec,
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelSettings {
    /// Reduced sizes that train in minutes: two encoder layers, 200 trees.
    pub fn desk() -> Self {
        Self {
            arch: ArchSpec::desk(NeuralVariant::Lstm),
            train: TrainConfig::default(),
            sarima: SarimaConfig::default(),
            prophet: ProphetConfig::default(),
            tabular: TabularSpec::default(),
            forest: ForestConfig::default(),
            gbt: GbtConfig::default(),
        }
    }

    /// Full published sizes: twelve encoder layers and 2000 trees of depth 200.
    pub fn paper_scale() -> Self {
        Self {
            arch: ArchSpec::new(NeuralVariant::Lstm),
            forest: ForestConfig { n_trees: 2000, max_depth: 200, ..Default::default() },
            gbt: GbtConfig { n_trees: 2000, max_depth: 200, ..Default::default() },
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel<M> {
    pub spec: TabularSpec,
    pub model: M,
}

#[derive(Debug, Clone)]
pub enum ForecastModel {
    Neural(NeuralModel),
    Sarima(SarimaModel),
    Prophet(ProphetLiteModel),
    Forest(TabularModel<ForestModel>),
    Gbt(TabularModel<GbtModel>),
    Persistence,
}

/// JSON document for the non-neural models.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    #[serde(flatten)]
    model: DocumentBody,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "snake_case")]
enum DocumentBody {
    Sarima(SarimaModel),
    Prophet(ProphetLiteModel),
    RandomForest(TabularModel<ForestModel>),
    Xgboost(TabularModel<GbtModel>),
    Persistence,
}

/// Rows available for fitting: everything up to the last training target.
fn training_rows(ds: &WindowedDataset, train: &Range<usize>) -> Result<usize> {
    if train.is_empty() || train.end > ds.len() {
        return Err(Error::Range("training split is empty or out of bounds".into()));
    }
    Ok(ds.target_row(train.end - 1) + 1)
}

fn tabular_matrix(spec: &TabularSpec, ds: &WindowedDataset, targets: &[usize]) -> Result<Matrix> {
    let rows = targets
        .iter()
        .map(|&t| extract_tabular_features(spec, &ds.rows.loads, &ds.rows.timestamps, t))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Tabular training set: targets of the training windows with full history.
/// Lags and windows longer than half the training rows are dropped.
fn tabular_training(
    spec: &TabularSpec,
    ds: &WindowedDataset,
    train: &Range<usize>,
) -> Result<(TabularSpec, Matrix, Vec<f64>)> {
    spec.validate()?;
    let n = training_rows(ds, train)?;
    let spec = spec.clipped(n / 2);
    let targets: Vec<usize> =
        train.clone().map(|w| ds.target_row(w)).filter(|&t| t >= spec.lookback()).collect();
    let x = tabular_matrix(&spec, ds, &targets)?;
    let y = targets.iter().map(|&t| ds.rows.loads[t]).collect();
    Ok((spec, x, y))
}

/// Trains `kind` on the training windows of `split`; neural models also use
/// the validation windows for checkpoint selection and learning-rate control.
pub fn train_model(
    kind: ModelKind,
    settings: &ModelSettings,
    ds: &WindowedDataset,
    split: &Split,
    seed: u64,
) -> Result<ForecastModel> {
    let n = training_rows(ds, &split.train)?;
    Ok(match kind {
        k if k.is_neural() => {
            let spec = ArchSpec {
                variant: k.neural_variant().expect("neural kind"),
                seq_len: ds.config.seq_len,
                pred_len: ds.config.pred_len,
                ..settings.arch.clone()
            };
            ForecastModel::Neural(NeuralModel::train(
                &spec,
                ds,
                split.train.clone(),
                split.val.clone(),
                &settings.train,
                seed,
            )?)
        }
        ModelKind::Sarima => ForecastModel::Sarima(fit_sarima(&ds.rows.loads[..n], &settings.sarima)?),
        ModelKind::Prophet => ForecastModel::Prophet(fit_prophet_lite(
            &ds.rows.timestamps[..n],
            &ds.rows.loads[..n],
            &ds.rows.holiday[..n],
            &settings.prophet,
        )?),
        ModelKind::RandomForest => {
            let (spec, x, y) = tabular_training(&settings.tabular, ds, &split.train)?;
            ForecastModel::Forest(TabularModel { spec, model: fit_random_forest(&x, &y, &settings.forest, seed)? })
        }
        ModelKind::Xgboost => {
            let (spec, x, y) = tabular_training(&settings.tabular, ds, &split.train)?;
            ForecastModel::Gbt(TabularModel { spec, model: fit_gbt(&x, &y, &settings.gbt, seed)? })
        }
        ModelKind::Persistence => ForecastModel::Persistence,
        _ => unreachable!("neural kinds handled above"),
    })
}

impl ForecastModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ForecastModel::Neural(m) => match m.spec.variant {
                NeuralVariant::Lstm => ModelKind::Lstm,
                NeuralVariant::BiLstm => ModelKind::BiLstm,
                NeuralVariant::CnnLstm => ModelKind::CnnLstm,
                NeuralVariant::CnnBiLstm => ModelKind::CnnBiLstm,
                NeuralVariant::Transformer => ModelKind::Transformer,
                NeuralVariant::DLinear => ModelKind::DLinear,
            },
            ForecastModel::Sarima(_) => ModelKind::Sarima,
            ForecastModel::Prophet(_) => ModelKind::Prophet,
            ForecastModel::Forest(_) => ModelKind::RandomForest,
            ForecastModel::Gbt(_) => ModelKind::Xgboost,
            ForecastModel::Persistence => ModelKind::Persistence,
        }
    }

    /// One-step forecasts in kW for the first target of each window.
    pub fn predict(&self, ds: &WindowedDataset, windows: Range<usize>) -> Result<Vec<f64>> {
        if windows.end > ds.len() {
            return Err(Error::Range(format!("window {} beyond {} windows", windows.end, ds.len())));
        }
        let targets: Vec<usize> = windows.clone().map(|w| ds.target_row(w)).collect();
        match self {
            ForecastModel::Neural(m) => m.predict(ds, windows),
            ForecastModel::Sarima(m) => m.one_step(&ds.rows.loads, &targets),
            ForecastModel::Prophet(m) => {
                let ts: Vec<_> = targets.iter().map(|&t| ds.rows.timestamps[t]).collect();
                let hol: Vec<bool> = targets.iter().map(|&t| ds.rows.holiday[t]).collect();
                m.predict(&ts, &hol)
            }
            ForecastModel::Forest(m) => m.model.predict(&tabular_matrix(&m.spec, ds, &targets)?),
            ForecastModel::Gbt(m) => m.model.predict(&tabular_matrix(&m.spec, ds, &targets)?),
            ForecastModel::Persistence => Ok(targets.iter().map(|&t| ds.rows.loads[t - 1]).collect()),
        }
    }

    /// Neural models use the binary parameter container; the rest a JSON
    /// document.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let body = match self {
            ForecastModel::Neural(m) => return m.save(w),
            ForecastModel::Sarima(m) => DocumentBody::Sarima(m.clone()),
            ForecastModel::Prophet(m) => DocumentBody::Prophet(m.clone()),
            ForecastModel::Forest(m) => DocumentBody::RandomForest(m.clone()),
            ForecastModel::Gbt(m) => DocumentBody::Xgboost(m.clone()),
            ForecastModel::Persistence => DocumentBody::Persistence,
        };
        let doc = ModelDocument { schema_version: MODEL_SCHEMA_VERSION, model: body };
        serde_json::to_writer(&mut w, &doc)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.starts_with(sparseload_nn::CONTAINER_MAGIC) {
            return Ok(ForecastModel::Neural(NeuralModel::load(bytes.as_slice())?));
        }
        let doc: ModelDocument = serde_json::from_slice(&bytes)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!("model schema version {}", doc.schema_version)));
        }
        Ok(match doc.model {
            DocumentBody::Sarima(m) => ForecastModel::Sarima(m),
            DocumentBody::Prophet(m) => ForecastModel::Prophet(m),
            DocumentBody::RandomForest(m) => ForecastModel::Forest(m),
            DocumentBody::Xgboost(m) => ForecastModel::Gbt(m),
            DocumentBody::Persistence => ForecastModel::Persistence,
        })
    }

    /// File extension used by [`ForecastModel::write_to`].
    pub fn extension(&self) -> &'static str {
        if matches!(self, ForecastModel::Neural(_)) { "slnn" } else { "json" }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::BENCHMARK.iter().chain(&[ModelKind::Persistence]) {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), *k);
            assert_eq!(serde_json::to_string(k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("gru".parse::<ModelKind>().is_err());
    }

    #[test]
    fn paper_scale_sizes() {
        let p = ModelSettings::paper_scale();
        assert_eq!((p.arch.layers, p.forest.n_trees, p.forest.max_depth), (12, 2000, 200));
        assert_eq!(ModelSettings::desk().arch.layers, 2);
    }
}
