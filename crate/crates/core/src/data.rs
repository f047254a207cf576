//! Hourly frames, calendar features and min-max scaling.

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weather observations for one hour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    /// °C
    pub avg_temperature: Option<f64>,
    /// m/s
    pub wind_speed: Option<f64>,
    /// %
    pub relative_humidity: Option<f64>,
    /// mm
    pub precipitation: Option<f64>,
}

/// Hourly series with a missingness-aware load channel.
///
/// Rows are uniformly spaced one hour apart; gaps are rows whose load is
/// `None`, never skipped timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<NaiveDateTime>,
    load: Vec<Option<f64>>,
    weather: Vec<WeatherRecord>,
    holiday: Vec<bool>,
    operating: Vec<bool>,
    imputed: Vec<bool>,
    ground_truth: Option<Vec<f64>>,
}

fn check_load(v: Option<f64>, row: usize) -> Result<()> {
    match v {
        Some(x) if !x.is_finite() || x < 0.0 => {
            Err(Error::Range(format!("load {x} at row {row} must be finite and >= 0")))
        }
        _ => Ok(()),
    }
}

impl TimeSeriesFrame {
    /// Builds a frame with every hour operating, no weather and no holidays.
    pub fn new(timestamps: Vec<NaiveDateTime>, load: Vec<Option<f64>>) -> Result<Self> {
        if timestamps.len() != load.len() {
            return Err(Error::Schema(format!(
                "{} timestamps but {} load values",
                timestamps.len(),
                load.len()
            )));
        }
        for w in timestamps.windows(2) {
            if w[1] - w[0] != Duration::hours(1) {
                return Err(Error::Schema(format!(
                    "timestamps {} -> {} are not one hour apart",
                    w[0], w[1]
                )));
            }
        }
        for (i, v) in load.iter().enumerate() {
            check_load(*v, i)?;
        }
        let n = timestamps.len();
        Ok(Self {
            timestamps,
            load,
            weather: vec![WeatherRecord::default(); n],
            holiday: vec![false; n],
            operating: vec![true; n],
            imputed: vec![false; n],
            ground_truth: None,
        })
    }

    /// Consecutive hourly timestamps starting at `start`.
    pub fn hourly_range(start: NaiveDateTime, n: usize) -> Vec<NaiveDateTime> {
        (0..n).map(|i| start + Duration::hours(i as i64)).collect()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn load(&self) -> &[Option<f64>] {
        &self.load
    }

    pub fn weather(&self) -> &[WeatherRecord] {
        &self.weather
    }

    pub fn holiday(&self) -> &[bool] {
        &self.holiday
    }

    pub fn operating(&self) -> &[bool] {
        &self.operating
    }

    pub fn imputed(&self) -> &[bool] {
        &self.imputed
    }

    pub fn ground_truth(&self) -> Option<&[f64]> {
        self.ground_truth.as_deref()
    }

    fn check_len(&self, n: usize, what: &str) -> Result<()> {
        if n != self.len() {
            return Err(Error::Schema(format!("{what} has {n} rows, frame has {}", self.len())));
        }
        Ok(())
    }

    pub fn set_load(&mut self, row: usize, value: Option<f64>) -> Result<()> {
        check_load(value, row)?;
        self.load[row] = value;
        Ok(())
    }

    pub(crate) fn set_imputed_load(&mut self, row: usize, value: f64) -> Result<()> {
        self.set_load(row, Some(value))?;
        self.imputed[row] = true;
        Ok(())
    }

    pub fn set_weather(&mut self, weather: Vec<WeatherRecord>) -> Result<()> {
        self.check_len(weather.len(), "weather")?;
        self.weather = weather;
        Ok(())
    }

    pub fn set_holiday(&mut self, holiday: Vec<bool>) -> Result<()> {
        self.check_len(holiday.len(), "holiday")?;
        self.holiday = holiday;
        Ok(())
    }

    pub fn set_operating(&mut self, operating: Vec<bool>) -> Result<()> {
        self.check_len(operating.len(), "operating mask")?;
        self.operating = operating;
        Ok(())
    }

    pub fn set_imputed_flags(&mut self, imputed: Vec<bool>) -> Result<()> {
        self.check_len(imputed.len(), "imputed flags")?;
        self.imputed = imputed;
        Ok(())
    }

    pub fn set_ground_truth(&mut self, truth: Option<Vec<f64>>) -> Result<()> {
        if let Some(t) = &truth {
            self.check_len(t.len(), "ground truth")?;
        }
        self.ground_truth = truth;
        Ok(())
    }

    /// Marks rows whose hour-of-day lies in `first..=last` as operating.
    pub fn set_operating_hours(&mut self, first: u32, last: u32) {
        self.operating = self
            .timestamps
            .iter()
            .map(|t| (first..=last).contains(&t.hour()))
            .collect();
    }

    /// Fraction of operating rows with missing load (0 when no row operates).
    pub fn sparsity(&self) -> f64 {
        let (mut total, mut missing) = (0usize, 0usize);
        for (l, op) in self.load.iter().zip(&self.operating) {
            if *op {
                total += 1;
                missing += usize::from(l.is_none());
            }
        }
        if total == 0 {
            0.0
        } else {
            missing as f64 / total as f64
        }
    }

    pub fn operating_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.operating[i]).collect()
    }

    /// Weather channels used as model features, with gaps forward-filled then
    /// back-filled. A channel with no observation at all is filled with 0.
    pub fn filled_weather(&self) -> Vec<[f64; 3]> {
        let channels: [fn(&WeatherRecord) -> Option<f64>; 3] = [
            |w| w.avg_temperature,
            |w| w.wind_speed,
            |w| w.relative_humidity,
        ];
        let mut out = vec![[0.0; 3]; self.len()];
        for (c, get) in channels.iter().enumerate() {
            let raw: Vec<Option<f64>> = self.weather.iter().map(get).collect();
            let filled = fill_forward_backward(&raw);
            for (row, v) in out.iter_mut().zip(filled) {
                row[c] = v;
            }
        }
        out
    }

    /// Feature vectors for every row; `None` where the load is missing.
    pub fn feature_vectors(&self) -> Vec<Option<FeatureVector>> {
        let weather = self.filled_weather();
        self.timestamps
            .iter()
            .zip(&self.load)
            .zip(weather)
            .map(|((ts, load), w)| {
                load.map(|l| FeatureVector::new(*ts, w[0], w[1], w[2], l))
            })
            .collect()
    }
}

fn fill_forward_backward(raw: &[Option<f64>]) -> Vec<f64> {
    let mut out: Vec<Option<f64>> = raw.to_vec();
    let mut last = None;
    for v in out.iter_mut() {
        match v {
            Some(x) => last = Some(*x),
            None => *v = last,
        }
    }
    let mut next = None;
    for v in out.iter_mut().rev() {
        match v {
            Some(x) => next = Some(*x),
            None => *v = next,
        }
    }
    out.into_iter().map(|v| v.unwrap_or(0.0)).collect()
}

/// `(year, month, day, weekday, hour)` with Monday = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub weekday: u32,
    pub hour: u32,
}

pub fn calendar_features(ts: NaiveDateTime) -> Calendar {
    Calendar {
        year: ts.year(),
        month: ts.month(),
        day: ts.day(),
        weekday: ts.weekday().num_days_from_monday(),
        hour: ts.hour(),
    }
}

/// Names of the model features, in vector order. `total_load` is last.
pub const FEATURE_NAMES: [&str; 9] = [
    "year",
    "month",
    "day",
    "weekday",
    "hour",
    "avg_temperature",
    "wind_speed",
    "relative_humidity",
    "total_load",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// Index of the load inside a feature vector.
pub const LOAD_INDEX: usize = N_FEATURES - 1;

/// One model input row, ordered as [`FEATURE_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub weekday: u32,
    pub hour: u32,
    pub avg_temperature: f64,
    pub wind_speed: f64,
    pub relative_humidity: f64,
    pub total_load: f64,
}

impl FeatureVector {
    pub fn new(
        ts: NaiveDateTime,
        avg_temperature: f64,
        wind_speed: f64,
        relative_humidity: f64,
        total_load: f64,
    ) -> Self {
        let c = calendar_features(ts);
        Self {
            year: c.year,
            month: c.month,
            day: c.day,
            weekday: c.weekday,
            hour: c.hour,
            avg_temperature,
            wind_speed,
            relative_humidity,
            total_load,
        }
    }

    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.year as f64,
            self.month as f64,
            self.day as f64,
            self.weekday as f64,
            self.hour as f64,
            self.avg_temperature,
            self.wind_speed,
            self.relative_humidity,
            self.total_load,
        ]
    }
}

/// Per-feature minimum and maximum for min-max scaling.
///
/// A feature whose minimum equals its maximum is flagged constant and always
/// scales to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxParams {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub constant: Vec<bool>,
}

impl MinMaxParams {
    /// Fits over `rows`, each holding one value per name.
    pub fn fit<'a, I>(names: &[&str], rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let k = names.len();
        let mut min = vec![f64::INFINITY; k];
        let mut max = vec![f64::NEG_INFINITY; k];
        let mut count = 0usize;
        for row in rows {
            if row.len() != k {
                return Err(Error::Schema(format!("row has {} values, expected {k}", row.len())));
            }
            for j in 0..k {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Range("cannot fit min-max scaling on an empty range".into()));
        }
        let constant = min.iter().zip(&max).map(|(a, b)| a == b).collect();
        Ok(Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            min,
            max,
            constant,
        })
    }

    fn check_names(&self, names: &[&str]) -> Result<()> {
        if self.names.len() != names.len() || self.names.iter().zip(names).any(|(a, b)| a != b) {
            return Err(Error::Schema(format!(
                "features {names:?} do not match scaler features {:?}",
                self.names
            )));
        }
        Ok(())
    }

    pub fn scale_value(&self, j: usize, x: f64) -> f64 {
        if self.constant[j] {
            0.0
        } else {
            (x - self.min[j]) / (self.max[j] - self.min[j])
        }
    }

    pub fn unscale_value(&self, j: usize, v: f64) -> f64 {
        if self.constant[j] {
            self.min[j]
        } else {
            self.min[j] + v * (self.max[j] - self.min[j])
        }
    }

    pub fn apply(&self, names: &[&str], values: &[f64]) -> Result<Vec<f64>> {
        self.check_names(names)?;
        if values.len() != names.len() {
            return Err(Error::Schema("value count differs from feature count".into()));
        }
        Ok(values.iter().enumerate().map(|(j, x)| self.scale_value(j, *x)).collect())
    }

    pub fn invert(&self, names: &[&str], values: &[f64]) -> Result<Vec<f64>> {
        self.check_names(names)?;
        if values.len() != names.len() {
            return Err(Error::Schema("value count differs from feature count".into()));
        }
        Ok(values.iter().enumerate().map(|(j, v)| self.unscale_value(j, *v)).collect())
    }

    /// Index of `name`, if the scaler covers it.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Fits a scaler on the frame rows in `rows`, using rows with observed load.
pub fn fit_minmax(frame: &TimeSeriesFrame, rows: std::ops::Range<usize>) -> Result<MinMaxParams> {
    if rows.start >= rows.end || rows.end > frame.len() {
        return Err(Error::Range(format!("row range {rows:?} invalid for {} rows", frame.len())));
    }
    let vectors = frame.feature_vectors();
    let arrays: Vec<[f64; N_FEATURES]> = vectors[rows]
        .iter()
        .flatten()
        .map(FeatureVector::to_array)
        .collect();
    MinMaxParams::fit(&FEATURE_NAMES, arrays.iter().map(|a| &a[..]))
}

pub fn apply_minmax(params: &MinMaxParams, v: &FeatureVector) -> Result<[f64; N_FEATURES]> {
    let out = params.apply(&FEATURE_NAMES, &v.to_array())?;
    Ok(out.try_into().expect("fixed feature count"))
}

pub fn invert_minmax(params: &MinMaxParams, v: &[f64; N_FEATURES]) -> Result<[f64; N_FEATURES]> {
    let out = params.invert(&FEATURE_NAMES, v)?;
    Ok(out.try_into().expect("fixed feature count"))
}
