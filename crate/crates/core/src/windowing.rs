//! Sliding supervised windows and chronological splits.

use std::ops::Range;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureVector, MinMaxParams, TimeSeriesFrame, FEATURE_NAMES, LOAD_INDEX, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub seq_len: usize,
    pub pred_len: usize,
    /// Only build windows whose rows are consecutive hours. Otherwise
    /// operating rows are concatenated across the overnight gap.
    pub respect_gaps: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { seq_len: 64, pred_len: 1, respect_gaps: false }
    }
}

/// The rows a dataset is built from: operating rows of a frame, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRows {
    pub timestamps: Vec<NaiveDateTime>,
    /// kW, complete.
    pub loads: Vec<f64>,
    pub holiday: Vec<bool>,
    /// Unscaled feature vectors in [`FEATURE_NAMES`] order.
    pub features: Vec<[f64; N_FEATURES]>,
}

impl SeriesRows {
    /// Extracts operating rows. Any missing load among them is an error.
    pub fn from_frame(frame: &TimeSeriesFrame) -> Result<Self> {
        let rows = frame.operating_rows();
        let vectors = frame.feature_vectors();
        let mut out = SeriesRows {
            timestamps: Vec::with_capacity(rows.len()),
            loads: Vec::with_capacity(rows.len()),
            holiday: Vec::with_capacity(rows.len()),
            features: Vec::with_capacity(rows.len()),
        };
        for &i in &rows {
            let v: FeatureVector = vectors[i].ok_or_else(|| {
                Error::Sparsity(format!("row {i} ({}) has no load", frame.timestamps()[i]))
            })?;
            out.timestamps.push(frame.timestamps()[i]);
            out.loads.push(v.total_load);
            out.holiday.push(frame.holiday()[i]);
            out.features.push(v.to_array());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }
}

/// Supervised windows over [`SeriesRows`]. Window `w` covers rows
/// `starts[w] .. starts[w] + seq_len` and predicts the loads of the next
/// `pred_len` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub config: WindowConfig,
    pub rows: SeriesRows,
    pub scaler: MinMaxParams,
    /// Scaled features per row.
    pub scaled: Vec<[f64; N_FEATURES]>,
    pub starts: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        &FEATURE_NAMES
    }

    /// Scaled input rows of window `w`.
    pub fn input(&self, w: usize) -> &[[f64; N_FEATURES]] {
        let s = self.starts[w];
        &self.scaled[s..s + self.config.seq_len]
    }

    /// Row index of the first target of window `w`.
    pub fn target_row(&self, w: usize) -> usize {
        self.starts[w] + self.config.seq_len
    }

    /// Scaled targets of window `w`.
    pub fn target(&self, w: usize) -> Vec<f64> {
        let t = self.target_row(w);
        (t..t + self.config.pred_len).map(|r| self.scaled[r][LOAD_INDEX]).collect()
    }

    /// Target loads in kW.
    pub fn target_kw(&self, w: usize) -> f64 {
        self.rows.loads[self.target_row(w)]
    }

    pub fn start_timestamp(&self, w: usize) -> NaiveDateTime {
        self.rows.timestamps[self.starts[w]]
    }

    pub fn target_timestamp(&self, w: usize) -> NaiveDateTime {
        self.rows.timestamps[self.target_row(w)]
    }

    pub fn unscale_load(&self, v: f64) -> f64 {
        self.scaler.unscale_value(LOAD_INDEX, v)
    }
}

fn window_starts(rows: &SeriesRows, cfg: &WindowConfig) -> Result<Vec<usize>> {
    if cfg.seq_len == 0 || cfg.pred_len == 0 {
        return Err(Error::Range("seq_len and pred_len must be positive".into()));
    }
    let span = cfg.seq_len + cfg.pred_len;
    if rows.len() < span {
        return Err(Error::Range(format!(
            "{} rows cannot hold a window of {span}",
            rows.len()
        )));
    }
    let all = 0..rows.len() - span + 1;
    if !cfg.respect_gaps {
        return Ok(all.collect());
    }
    // A window is contiguous when its first and last rows are span-1 hours apart.
    let starts: Vec<usize> = all
        .filter(|&s| {
            rows.timestamps[s + span - 1] - rows.timestamps[s] == Duration::hours(span as i64 - 1)
        })
        .collect();
    if starts.is_empty() {
        return Err(Error::Range("no gap-free window fits the series".into()));
    }
    Ok(starts)
}

/// Builds windows scaled with `scaler`.
pub fn serialize_windows(
    frame: &TimeSeriesFrame,
    cfg: WindowConfig,
    scaler: &MinMaxParams,
) -> Result<WindowedDataset> {
    let rows = SeriesRows::from_frame(frame)?;
    build(rows, cfg, scaler.clone())
}

fn build(rows: SeriesRows, cfg: WindowConfig, scaler: MinMaxParams) -> Result<WindowedDataset> {
    let starts = window_starts(&rows, &cfg)?;
    let scaled = rows
        .features
        .iter()
        .map(|f| {
            let v = scaler.apply(&FEATURE_NAMES, f)?;
            Ok(v.try_into().expect("fixed feature count"))
        })
        .collect::<Result<_>>()?;
    Ok(WindowedDataset { config: cfg, rows, scaler, scaled, starts })
}

/// Window index ranges of a chronological split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split_sizes(n: usize, train_frac: f64, val_frac: f64) -> Result<Split> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Range(format!(
            "split fractions {train_frac}/{val_frac} must be positive and sum below 1"
        )));
    }
    let n_train = (n as f64 * train_frac).floor() as usize;
    let n_val = (n as f64 * val_frac).floor() as usize;
    let n_test = n.saturating_sub(n_train + n_val);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Range(format!(
            "split of {n} windows gives {n_train}/{n_val}/{n_test}"
        )));
    }
    Ok(Split {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..n,
    })
}

pub fn split_dataset(ds: &WindowedDataset, train_frac: f64, val_frac: f64) -> Result<Split> {
    split_sizes(ds.len(), train_frac, val_frac)
}

/// Windows a frame, fitting the scaler on the rows the training windows see
/// (inputs and targets) and nothing later.
pub fn prepare_dataset(
    frame: &TimeSeriesFrame,
    cfg: WindowConfig,
    train_frac: f64,
    val_frac: f64,
) -> Result<(WindowedDataset, Split)> {
    let rows = SeriesRows::from_frame(frame)?;
    let starts = window_starts(&rows, &cfg)?;
    let split = split_sizes(starts.len(), train_frac, val_frac)?;
    let last_train_row = starts[split.train.end - 1] + cfg.seq_len + cfg.pred_len;
    let scaler = MinMaxParams::fit(
        &FEATURE_NAMES,
        rows.features[..last_train_row].iter().map(|f| &f[..]),
    )?;
    let ds = build(rows, cfg, scaler)?;
    Ok((ds, split))
}
