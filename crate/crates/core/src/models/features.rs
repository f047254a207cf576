//! Lag, rolling-window and calendar features for tabular regressors.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::data::calendar_features;
use crate::error::{Error, Result};

pub const DEFAULT_LAGS: [usize; 8] = [1, 2, 3, 6, 12, 24, 48, 168];
pub const DEFAULT_WINDOWS: [usize; 2] = [24, 168];

/// Feature layout, in order: `lag_k` for each lag, then `roll_mean_w` and
/// `roll_std_w` for each window, then year, month, day, weekday, hour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularSpec {
    pub lags: Vec<usize>,
    pub windows: Vec<usize>,
}

impl Default for TabularSpec {
    fn default() -> Self {
        Self { lags: DEFAULT_LAGS.to_vec(), windows: DEFAULT_WINDOWS.to_vec() }
    }
}

impl TabularSpec {
    /// Drops lags and windows longer than `history` rows.
    pub fn clipped(&self, history: usize) -> Self {
        Self {
            lags: self.lags.iter().copied().filter(|&l| l <= history).collect(),
            windows: self.windows.iter().copied().filter(|&w| w <= history).collect(),
        }
    }

    /// Rows of history needed before the first usable index.
    pub fn lookback(&self) -> usize {
        self.lags.iter().chain(&self.windows).copied().max().unwrap_or(0)
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.lags.iter().map(|l| format!("lag_{l}")).collect();
        for w in &self.windows {
            names.push(format!("roll_mean_{w}"));
            names.push(format!("roll_std_{w}"));
        }
        names.extend(["year", "month", "day", "weekday", "hour"].map(String::from));
        names
    }

    pub fn width(&self) -> usize {
        self.lags.len() + 2 * self.windows.len() + 5
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags.contains(&0) || self.windows.iter().any(|&w| w < 2) {
            return Err(Error::Range("lags must be ≥ 1 and rolling windows ≥ 2".into()));
        }
        Ok(())
    }
}

/// Feature row for predicting `loads[t]` from `loads[..t]` and the
/// calendar of `timestamps[t]`.
pub fn extract_tabular_features(
    spec: &TabularSpec,
    loads: &[f64],
    timestamps: &[NaiveDateTime],
    t: usize,
) -> Result<Vec<f64>> {
    let need = spec.lookback();
    if t < need {
        return Err(Error::Range(format!("index {t} has less than {need} rows of history")));
    }
    if t >= timestamps.len() || t > loads.len() {
        return Err(Error::Range(format!("index {t} beyond the series")));
    }
    let mut row = Vec::with_capacity(spec.width());
    row.extend(spec.lags.iter().map(|&l| loads[t - l]));
    for &w in &spec.windows {
        let slice = &loads[t - w..t];
        let mean = slice.iter().sum::<f64>() / w as f64;
        let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w - 1) as f64;
        row.push(mean);
        row.push(var.sqrt());
    }
    let c = calendar_features(timestamps[t]);
    row.extend([c.year as f64, c.month as f64, c.day as f64, c.weekday as f64, c.hour as f64]);
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeSeriesFrame;
    use chrono::NaiveDate;

    fn stamps(n: usize) -> Vec<NaiveDateTime> {
        let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        TimeSeriesFrame::hourly_range(start, n)
    }

    #[test]
    fn constant_and_ramp() {
        let spec = TabularSpec::default();
        let ts = stamps(400);
        let row = extract_tabular_features(&spec, &[7.0; 400], &ts, 300).unwrap();
        assert!(row[..8].iter().all(|v| *v == 7.0));
        assert_eq!((row[8], row[9], row[10], row[11]), (7.0, 0.0, 7.0, 0.0));
        let ramp: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let row = extract_tabular_features(&spec, &ramp, &ts, 250).unwrap();
        assert_eq!(row[0], 249.0);
        assert_eq!(row[7], 82.0);
        // 300 = 12 days + 12 hours after 2021-03-01 00:00, a Monday.
        let row = extract_tabular_features(&spec, &ramp, &ts, 300).unwrap();
        assert_eq!(&row[12..], &[2021.0, 3.0, 13.0, 5.0, 12.0]);
        assert_eq!(spec.names().len(), row.len());
    }

    #[test]
    fn history_guard_and_clipping() {
        let spec = TabularSpec::default();
        let ts = stamps(200);
        assert!(matches!(
            extract_tabular_features(&spec, &[1.0; 200], &ts, 100),
            Err(Error::Range(_))
        ));
        let short = spec.clipped(100);
        assert_eq!(short.lags, vec![1, 2, 3, 6, 12, 24, 48]);
        assert_eq!(short.windows, vec![24]);
        assert_eq!(short.lookback(), 48);
        assert!(extract_tabular_features(&short, &[1.0; 200], &ts, 100).is_ok());
    }

    #[test]
    fn rows_depend_only_on_their_history() {
        let spec = TabularSpec::default();
        let ts = stamps(500);
        let x: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64).collect();
        let a = extract_tabular_features(&spec, &x, &ts, 400).unwrap();
        let mut y = x.clone();
        y[450] = -1.0;
        assert_eq!(a, extract_tabular_features(&spec, &y, &ts, 400).unwrap());
    }
}
