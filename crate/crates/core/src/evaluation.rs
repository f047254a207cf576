//! Forecast metrics, per-model reports and cross-model comparison.

use std::io::Write;
use std::ops::Range;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DEFAULT_TIMESTAMP_FORMAT;
use crate::models::ForecastModel;
use crate::statistics::{bland_altman, BlandAltman};
use crate::windowing::WindowedDataset;

/// Targets at or below this magnitude are left out of MAPE.
pub const MAPE_ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    /// Percent; `None` when every target is zero.
    pub mape: Option<f64>,
    pub n: usize,
    /// Targets excluded from MAPE.
    pub excluded: usize,
}

impl Metrics {
    pub fn mape(&self) -> Result<f64> {
        self.mape.ok_or_else(|| Error::Metric("MAPE undefined: every target is zero".into()))
    }
}

pub fn compute_metrics(actual: &[f64], predicted: &[f64]) -> Result<Metrics> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(Error::Schema(format!(
            "metrics need equal non-empty series, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(Error::Metric("non-finite value in metric input".into()));
    }
    let n = actual.len() as f64;
    let mae = actual.iter().zip(predicted).map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
    let mse = actual.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / n;
    let kept: Vec<f64> = actual
        .iter()
        .zip(predicted)
        .filter(|(y, _)| y.abs() > MAPE_ZERO_THRESHOLD)
        .map(|(y, p)| ((y - p) / y).abs())
        .collect();
    let excluded = actual.len() - kept.len();
    let mape = (!kept.is_empty()).then(|| 100.0 * kept.iter().sum::<f64>() / kept.len() as f64);
    Ok(Metrics { mae, mse, mape, n: actual.len(), excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub timestamp: NaiveDateTime,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// kW.
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    /// kW².
    pub mse: f64,
    /// Points entering MAPE.
    pub n: usize,
    pub excluded: usize,
    pub trace: Vec<TracePoint>,
}

impl EvalReport {
    pub fn from_trace(model: impl Into<String>, trace: Vec<TracePoint>) -> Result<Self> {
        let actual: Vec<f64> = trace.iter().map(|p| p.actual).collect();
        let predicted: Vec<f64> = trace.iter().map(|p| p.predicted).collect();
        let m = compute_metrics(&actual, &predicted)?;
        Ok(EvalReport {
            model: model.into(),
            mae: m.mae,
            mape: m.mape()?,
            mse: m.mse,
            n: m.n - m.excluded,
            excluded: m.excluded,
            trace,
        })
    }
}

/// Walk-forward one-step evaluation over `windows`, in kW.
pub fn evaluate(model: &ForecastModel, ds: &WindowedDataset, windows: Range<usize>) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Range("no windows to evaluate".into()));
    }
    let predicted = model.predict(ds, windows.clone())?;
    let trace = windows
        .zip(predicted)
        .map(|(w, p)| TracePoint { timestamp: ds.target_timestamp(w), actual: ds.target_kw(w), predicted: p })
        .collect();
    EvalReport::from_trace(model.kind().name(), trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub model: String,
    pub mae: f64,
    pub mape: f64,
    pub mse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub a: String,
    pub b: String,
    pub summary: BlandAltman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    /// Ascending MAPE; ties keep input order.
    pub ranking: Vec<RankedModel>,
    pub agreement: Vec<PairAgreement>,
}

fn find<'a>(reports: &'a [EvalReport], name: &str) -> Result<&'a EvalReport> {
    reports
        .iter()
        .find(|r| r.model == name)
        .ok_or_else(|| Error::Schema(format!("no report for model {name:?}")))
}

/// Ranks reports by MAPE and computes Bland–Altman agreement for `pairs`.
pub fn compare(reports: &[EvalReport], pairs: &[(String, String)]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::Schema(format!("comparison needs at least 2 reports, got {}", reports.len())));
    }
    let mut order: Vec<&EvalReport> = reports.iter().collect();
    order.sort_by(|a, b| a.mape.total_cmp(&b.mape));
    let ranking = order
        .iter()
        .enumerate()
        .map(|(i, r)| RankedModel { rank: i + 1, model: r.model.clone(), mae: r.mae, mape: r.mape, mse: r.mse, n: r.n })
        .collect();
    let agreement = pairs
        .iter()
        .map(|(a, b)| {
            let (ra, rb) = (find(reports, a)?, find(reports, b)?);
            let aligned = ra.trace.len() == rb.trace.len()
                && ra.trace.iter().zip(&rb.trace).all(|(p, q)| p.timestamp == q.timestamp && p.actual == q.actual);
            if !aligned {
                return Err(Error::Schema(format!("traces of {a:?} and {b:?} are not aligned")));
            }
            let pa: Vec<f64> = ra.trace.iter().map(|p| p.predicted).collect();
            let pb: Vec<f64> = rb.trace.iter().map(|p| p.predicted).collect();
            Ok(PairAgreement { a: a.clone(), b: b.clone(), summary: bland_altman(&pa, &pb)? })
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonTable { ranking, agreement })
}

/// Columns: timestamp, actual, predicted, model.
pub fn write_traces_csv<W: Write>(w: W, reports: &[EvalReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "actual", "predicted", "model"])?;
    for r in reports {
        for p in &r.trace {
            out.write_record([
                p.timestamp.format(DEFAULT_TIMESTAMP_FORMAT).to_string(),
                p.actual.to_string(),
                p.predicted.to_string(),
                r.model.clone(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Columns: rank, model, mae, mape, mse, n.
pub fn write_comparison_csv<W: Write>(w: W, table: &ComparisonTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rank", "model", "mae", "mape", "mse", "n"])?;
    for r in &table.ranking {
        out.write_record([
            r.rank.to_string(),
            r.model.clone(),
            r.mae.to_string(),
            r.mape.to_string(),
            r.mse.to_string(),
            r.n.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-point means and differences of one pair. Columns: mean, diff.
pub fn write_bland_altman_csv<W: Write>(w: W, pair: &PairAgreement) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mean", "diff"])?;
    for (m, d) in pair.summary.means.iter().zip(&pair.summary.diffs) {
        out.write_record([m.to_string(), d.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
