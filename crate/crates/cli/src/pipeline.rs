//! The ingest → interpolate → analyze → train → evaluate chain.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sparseload_core::data::TimeSeriesFrame;
use sparseload_core::evaluation::{self, EvalReport};
use sparseload_core::ingest::{self, DEFAULT_TIMESTAMP_FORMAT};
use sparseload_core::interpolation::{self, HourlyGaussianTable};
use sparseload_core::models::{train_model, ForecastModel, ModelKind};
use sparseload_core::rng::stage_seed;
use sparseload_core::statistics::{self, DistributionFit, DistributionKind, TestResult};
use sparseload_core::windowing::{prepare_dataset, SeriesRows, Split, WindowedDataset};

use crate::config::{DataSource, Interpolation, LoadedConfig, SCHEMA_VERSION};
use crate::error::CliError;
use crate::manifest;

const STAGE_SYNTHETIC: u64 = 1;
const STAGE_MASK: u64 = 2;
const STAGE_IMPUTE: u64 = 3;
const STAGE_TRAIN: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Analyze,
    Interpolate,
    Train,
    Evaluate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Analyze => "analyze",
            Command::Interpolate => "interpolate",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
        }
    }
}

/// Writes artifacts one at a time under the output directory.
struct Output {
    root: PathBuf,
}

impl Output {
    fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root })
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }
}

/// Adds `schema_version` in front of a serialized document.
fn versioned<T: Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    let mut v = serde_json::to_value(value)?;
    if let Some(map) = v.as_object_mut() {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    Ok(v)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Core(e.into());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::io("csv buffer", e.into_error()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Observed (possibly masked) frame, its hourly table and the imputed frame.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub observed: TimeSeriesFrame,
    pub table: HourlyGaussianTable,
    pub imputed: TimeSeriesFrame,
}

pub fn load_observed(cfg: &LoadedConfig) -> Result<(TimeSeriesFrame, f64), CliError> {
    let seed = cfg.config.seed;
    let (frame, sparsity, default_cap) = match &cfg.config.data {
        DataSource::Synthetic { spec, sparsity } => {
            let spec = ingest::SyntheticSpec { seed: stage_seed(seed, STAGE_SYNTHETIC), ..spec.clone() };
            (ingest::generate_synthetic_wss(&spec)?, *sparsity, Some(spec.capacity))
        }
        DataSource::Csv { path, schema, weather, holidays, operating_hours, sparsity } => {
            let loaded = ingest::load_hourly_csv(cfg.resolve(path), schema)?;
            let mut frame = loaded.frame;
            if let Some(w) = weather {
                frame = ingest::join_weather(&frame, cfg.resolve(w), &schema.timestamp_format)?;
            }
            if let Some(h) = holidays {
                let p = cfg.resolve(h);
                let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                frame = ingest::mark_holidays(&frame, &ingest::parse_holidays(&text)?).0;
            }
            if let Some((a, b)) = operating_hours {
                frame.set_operating_hours(*a, *b);
            }
            (frame, *sparsity, None)
        }
    };
    let frame = if sparsity > 0.0 {
        ingest::apply_sparsity_mask(&frame, sparsity, stage_seed(seed, STAGE_MASK))?
    } else {
        frame
    };
    let observed_max = || frame.load().iter().flatten().copied().fold(f64::NAN, f64::max);
    let capacity = cfg.config.capacity_kw.or(default_cap).unwrap_or_else(observed_max);
    Ok((frame, capacity))
}

pub fn prepare(cfg: &LoadedConfig) -> Result<Prepared, CliError> {
    let (observed, capacity) = load_observed(cfg)?;
    let table = interpolation::estimate_hourly_gaussians(&observed, capacity)?;
    let imputed = match cfg.config.interpolation {
        Interpolation::Gaussian => {
            interpolation::impute_gaussian(&observed, &table, stage_seed(cfg.config.seed, STAGE_IMPUTE))?
        }
        Interpolation::Linear => interpolation::impute_linear(&observed)?,
    };
    Ok(Prepared { observed, table, imputed })
}

fn interpolate_stage(out: &Output, p: &Prepared) -> Result<(), CliError> {
    let mut frame_csv = Vec::new();
    ingest::write_frame_csv(&p.imputed, &mut frame_csv)?;
    out.write("interpolation/imputed.csv", &frame_csv)?;
    let missing = (0..p.observed.len())
        .filter(|&i| p.observed.operating()[i] && p.observed.load()[i].is_none())
        .count();
    out.write_json(
        "interpolation/gaussian_table.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "sparsity": p.observed.sparsity(),
            "missing_rows": missing,
            "table": p.table,
        }),
    )?;
    let rows = p.table.hours.iter().enumerate().filter_map(|(h, s)| {
        s.map(|s| vec![h.to_string(), s.mu.to_string(), s.sigma.to_string(), s.count.to_string()])
    });
    out.write("interpolation/hourly_profile.csv", &csv_bytes(&["hour", "mu", "sigma", "count"], rows)?)
}

#[derive(Serialize)]
struct FitSummary {
    fit: DistributionFit,
    aic: f64,
    chi_squared: TestResult,
}

fn analyze_stage(cfg: &LoadedConfig, out: &Output, p: &Prepared) -> Result<(), CliError> {
    let rows = SeriesRows::from_frame(&p.imputed)?;
    let loads = &rows.loads;
    let a = cfg.config.analysis;
    let period = a.period.unwrap_or_else(|| {
        let hours: BTreeSet<_> = rows.timestamps.iter().map(|t| t.format("%H").to_string()).collect();
        hours.len().max(2)
    });
    let max_lag = a.acf_max_lag.min(loads.len().saturating_sub(1));
    let acf = statistics::autocorrelation(loads, max_lag)?;
    let decomposition = statistics::additive_decompose(loads, period)?;
    let adf = statistics::adf_test(loads)?;
    let kpss = statistics::kpss_test(loads)?;

    let lo = loads.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let step = (hi - lo) / (a.kde_points - 1) as f64;
    let grid: Vec<f64> = (0..a.kde_points).map(|i| lo + step * i as f64).collect();
    let density = statistics::kde(loads, &grid, None)?;

    let mut fits = BTreeMap::new();
    for kind in [DistributionKind::Gaussian, DistributionKind::Rayleigh] {
        let fit = statistics::fit_distribution(loads, kind)?;
        let chi_squared = statistics::chi_squared_gof(loads, &fit)?;
        let aic = 2.0 * fit.n_params() as f64 - 2.0 * fit.log_likelihood();
        let name = serde_json::to_value(kind)?.as_str().unwrap_or_default().to_string();
        fits.insert(name, FitSummary { fit, aic, chi_squared });
    }
    let best_fit = fits
        .iter()
        .min_by(|x, y| x.1.aic.total_cmp(&y.1.aic))
        .map(|(k, _)| k.clone());

    out.write_json(
        "analysis/statistics.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "n_rows": loads.len(),
            "period": period,
            "acf_max_lag": max_lag,
            "adf": adf,
            "kpss": kpss,
            "kde_bandwidth": density.bandwidth,
            "fits": fits,
            "best_fit": best_fit,
        }),
    )?;
    out.write(
        "analysis/acf.csv",
        &csv_bytes(&["lag", "acf"], acf.iter().enumerate().map(|(k, v)| vec![k.to_string(), v.to_string()]))?,
    )?;
    let d = &decomposition;
    out.write(
        "analysis/decomposition.csv",
        &csv_bytes(
            &["timestamp", "observed", "trend", "seasonal", "residual"],
            (0..loads.len()).map(|t| {
                vec![
                    rows.timestamps[t].format(DEFAULT_TIMESTAMP_FORMAT).to_string(),
                    loads[t].to_string(),
                    opt(d.trend[t]),
                    d.seasonal[t].to_string(),
                    opt(d.residual[t]),
                ]
            }),
        )?,
    )?;
    out.write(
        "analysis/kde.csv",
        &csv_bytes(
            &["load", "density"],
            grid.iter().zip(&density.density).map(|(g, v)| vec![g.to_string(), v.to_string()]),
        )?,
    )?;
    let gauss = &fits["gaussian"].fit;
    let rayleigh = &fits["rayleigh"].fit;
    out.write(
        "analysis/fits.csv",
        &csv_bytes(
            &["load", "kde", "gaussian", "rayleigh"],
            grid.iter().zip(&density.density).map(|(&g, v)| {
                vec![g.to_string(), v.to_string(), gauss.pdf(g).to_string(), rayleigh.pdf(g).to_string()]
            }),
        )?,
    )
}

fn dataset(cfg: &LoadedConfig, p: &Prepared) -> Result<(WindowedDataset, Split), CliError> {
    let c = &cfg.config;
    Ok(prepare_dataset(&p.imputed, c.window, c.split.train, c.split.val)?)
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}

fn model_path(kind: ModelKind) -> String {
    let ext = if kind.is_neural() { "slnn" } else { "json" };
    format!("models/{}.{ext}", kind.name())
}

fn train_stage(cfg: &LoadedConfig, out: &Output, p: &Prepared, threads: usize) -> Result<(), CliError> {
    let (ds, split) = dataset(cfg, p)?;
    let seed = stage_seed(cfg.config.seed, STAGE_TRAIN);
    log::info!(
        "training {} models on {} windows ({} train, {} val) with {threads} workers",
        cfg.config.models.len(),
        ds.len(),
        split.train.len(),
        split.val.len()
    );
    let trained: Vec<Result<ForecastModel, CliError>> = pool(threads)?.install(|| {
        use rayon::prelude::*;
        cfg.config
            .models
            .par_iter()
            .map(|&kind| {
                let started = std::time::Instant::now();
                let m = train_model(kind, &cfg.settings, &ds, &split, seed)?;
                log::info!("trained {kind} in {:.1?}", started.elapsed());
                Ok(m)
            })
            .collect()
    });
    for model in trained {
        let model = model?;
        let kind = model.kind();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes)?;
        out.write(&model_path(kind), &bytes)?;
        if let ForecastModel::Neural(m) = &model {
            let rows = m.history.iter().map(|e| {
                vec![
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.val_loss.to_string(),
                    e.learning_rate.to_string(),
                ]
            });
            let header = ["epoch", "train_loss", "val_loss", "learning_rate"];
            out.write(&format!("models/{}_history.csv", kind.name()), &csv_bytes(&header, rows)?)?;
        }
    }
    Ok(())
}

fn read_model(out: &Output, kind: ModelKind) -> Result<ForecastModel, CliError> {
    let path = out.root.join(model_path(kind));
    if !path.is_file() {
        return Err(CliError::MissingArtifact { path });
    }
    let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let model = ForecastModel::read_from(std::io::BufReader::new(file))?;
    if model.kind() != kind {
        return Err(CliError::Core(sparseload_core::Error::Schema(format!(
            "{} holds a {} model",
            path.display(),
            model.kind()
        ))));
    }
    Ok(model)
}

fn evaluate_stage(cfg: &LoadedConfig, out: &Output, p: &Prepared, threads: usize) -> Result<(), CliError> {
    let (ds, split) = dataset(cfg, p)?;
    let models = cfg
        .config
        .models
        .iter()
        .map(|&k| read_model(out, k))
        .collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<Result<EvalReport, CliError>> = pool(threads)?.install(|| {
        use rayon::prelude::*;
        models.par_iter().map(|m| Ok(evaluation::evaluate(m, &ds, split.test.clone())?)).collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        log::info!("{}: MAPE {:.3}% MAE {:.3}", r.model, r.mape, r.mae);
        out.write_json(&format!("reports/{}.json", r.model), &versioned(r)?)?;
    }
    let mut traces = Vec::new();
    evaluation::write_traces_csv(&mut traces, &reports)?;
    out.write("reports/traces.csv", &traces)?;

    if reports.len() < 2 {
        return Ok(());
    }
    let present: BTreeSet<ModelKind> = cfg.config.models.iter().copied().collect();
    let pairs: Vec<(String, String)> = cfg
        .config
        .agreement
        .iter()
        .filter(|(a, b)| present.contains(a) && present.contains(b))
        .map(|(a, b)| (a.name().to_string(), b.name().to_string()))
        .collect();
    let table = evaluation::compare(&reports, &pairs)?;
    let mut csv = Vec::new();
    evaluation::write_comparison_csv(&mut csv, &table)?;
    out.write("comparison.csv", &csv)?;
    let agreement: Vec<_> = table
        .agreement
        .iter()
        .map(|a| {
            json!({
                "a": a.a, "b": a.b,
                "bias": a.summary.bias, "std": a.summary.std,
                "lower": a.summary.lower, "upper": a.summary.upper,
            })
        })
        .collect();
    out.write_json(
        "comparison.json",
        &json!({ "schema_version": SCHEMA_VERSION, "ranking": table.ranking, "agreement": agreement }),
    )?;
    for pair in &table.agreement {
        let mut csv = Vec::new();
        evaluation::write_bland_altman_csv(&mut csv, pair)?;
        out.write(&format!("bland_altman/{}_vs_{}.csv", pair.a, pair.b), &csv)?;
    }
    Ok(())
}

/// What a finished command reports on standard output.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub status: &'static str,
    pub command: &'static str,
    pub output_dir: PathBuf,
    pub artifacts: usize,
}

/// Runs `command`, then rewrites the manifest over everything in the output
/// directory.
pub fn execute(command: Command, cfg: &LoadedConfig, out_dir: &Path, threads: usize) -> Result<Summary, CliError> {
    let out = Output::create(out_dir.to_path_buf())?;
    let prepared = prepare(cfg)?;
    match command {
        Command::Interpolate => interpolate_stage(&out, &prepared)?,
        Command::Analyze => analyze_stage(cfg, &out, &prepared)?,
        Command::Train => train_stage(cfg, &out, &prepared, threads)?,
        Command::Evaluate => evaluate_stage(cfg, &out, &prepared, threads)?,
        Command::Run => {
            interpolate_stage(&out, &prepared)?;
            analyze_stage(cfg, &out, &prepared)?;
            train_stage(cfg, &out, &prepared, threads)?;
            evaluate_stage(cfg, &out, &prepared, threads)?;
        }
    }
    let m = manifest::build(cfg, &out.root)?;
    let artifacts = m.artifacts.len();
    out.write_json(manifest::MANIFEST_FILE, &m)?;
    Ok(Summary {
        schema_version: SCHEMA_VERSION,
        status: "ok",
        command: command.name(),
        output_dir: out.root.clone(),
        artifacts,
    })
}
