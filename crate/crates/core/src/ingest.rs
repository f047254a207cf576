//! CSV loading, weather joins, holidays and synthetic series.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{TimeSeriesFrame, WeatherRecord};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Column layout of an hourly load CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub timestamp_format: String,
    pub value_column: String,
    /// Multiplier from file units to kW.
    pub scale: f64,
}

impl CsvSchema {
    /// PJM Dayton layout: `Datetime,DAYTON_MW`, megawatts.
    pub fn dayton() -> Self {
        Self {
            timestamp_column: "Datetime".into(),
            timestamp_format: DEFAULT_TIMESTAMP_FORMAT.into(),
            value_column: "DAYTON_MW".into(),
            scale: 1000.0,
        }
    }
}

/// A loaded frame plus how many duplicate timestamps were overwritten.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub frame: TimeSeriesFrame,
    pub duplicate_count: usize,
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?} in header {headers:?}")))
}

fn parse_hour(raw: &str, format: &str, row: usize) -> Result<NaiveDateTime> {
    let ts = NaiveDateTime::parse_from_str(raw.trim(), format).map_err(|e| Error::Ingest {
        row,
        detail: format!("timestamp {raw:?}: {e}"),
    })?;
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(Error::Ingest { row, detail: format!("timestamp {raw:?} is not on the hour") });
    }
    Ok(ts)
}

fn parse_optional(raw: &str, row: usize, what: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Ingest { row, detail: format!("{what} {raw:?} is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Ingest { row, detail: format!("{what} {raw:?} is not finite") });
    }
    Ok(Some(v))
}

/// Reads an hourly load CSV. Rows are numbered from 1 for the first data row.
pub fn read_hourly_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts_col = header_index(&headers, &schema.timestamp_column)?;
    let val_col = header_index(&headers, &schema.value_column)?;

    let mut values: BTreeMap<NaiveDateTime, Option<f64>> = BTreeMap::new();
    let mut duplicate_count = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingest { row, detail: e.to_string() })?;
        let field = |c: usize| {
            record
                .get(c)
                .ok_or_else(|| Error::Ingest { row, detail: format!("missing field {c}") })
        };
        let ts = parse_hour(field(ts_col)?, &schema.timestamp_format, row)?;
        let value = parse_optional(field(val_col)?, row, "load")?.map(|v| v * schema.scale);
        if let Some(v) = value {
            if v < 0.0 {
                return Err(Error::Ingest { row, detail: format!("negative load {v}") });
            }
        }
        if values.insert(ts, value).is_some() {
            duplicate_count += 1;
        }
    }
    let (Some(first), Some(last)) = (values.keys().next().copied(), values.keys().last().copied())
    else {
        return Err(Error::Ingest { row: 0, detail: "file has no data rows".into() });
    };
    if duplicate_count > 0 {
        log::warn!("{duplicate_count} duplicate timestamps resolved last-wins");
    }
    let n = ((last - first).num_hours() + 1) as usize;
    let timestamps = TimeSeriesFrame::hourly_range(first, n);
    let load = timestamps.iter().map(|t| values.get(t).copied().flatten()).collect();
    Ok(Ingested { frame: TimeSeriesFrame::new(timestamps, load)?, duplicate_count })
}

pub fn load_hourly_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Ingested> {
    read_hourly_csv(std::fs::File::open(path)?, schema)
}

/// Column names of the weather CSV, after the timestamp column.
pub const WEATHER_COLUMNS: [&str; 4] =
    ["avg_temperature", "wind_speed", "relative_humidity", "precipitation"];

/// Fills weather fields for matching hours. Hours absent from the weather
/// file keep empty weather.
pub fn read_weather<R: Read>(
    frame: &TimeSeriesFrame,
    reader: R,
    timestamp_format: &str,
) -> Result<TimeSeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts_col = header_index(&headers, "timestamp")?;
    let cols: Vec<usize> =
        WEATHER_COLUMNS.iter().map(|c| header_index(&headers, c)).collect::<Result<_>>()?;

    let start = frame
        .timestamps()
        .first()
        .copied()
        .ok_or_else(|| Error::Join("frame is empty".into()))?;
    let mut weather = frame.weather().to_vec();
    let mut matched = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingest { row, detail: e.to_string() })?;
        let raw_ts = record.get(ts_col).unwrap_or("");
        let ts = NaiveDateTime::parse_from_str(raw_ts.trim(), timestamp_format)
            .map_err(|e| Error::Ingest { row, detail: format!("timestamp {raw_ts:?}: {e}") })?;
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(Error::Join(format!("weather timestamp {ts} at row {row} is not on the hour")));
        }
        let offset = (ts - start).num_hours();
        if offset < 0 || offset as usize >= frame.len() {
            continue;
        }
        let v: Vec<Option<f64>> = cols
            .iter()
            .zip(WEATHER_COLUMNS)
            .map(|(&c, name)| parse_optional(record.get(c).unwrap_or(""), row, name))
            .collect::<Result<_>>()?;
        weather[offset as usize] = WeatherRecord {
            avg_temperature: v[0],
            wind_speed: v[1],
            relative_humidity: v[2],
            precipitation: v[3],
        };
        matched += 1;
    }
    if matched == 0 {
        return Err(Error::Join("no weather timestamp overlaps the frame".into()));
    }
    let mut out = frame.clone();
    out.set_weather(weather)?;
    Ok(out)
}

pub fn join_weather(
    frame: &TimeSeriesFrame,
    path: impl AsRef<Path>,
    timestamp_format: &str,
) -> Result<TimeSeriesFrame> {
    read_weather(frame, std::fs::File::open(path)?, timestamp_format)
}

/// Parses a holiday list: one `YYYY-MM-DD` per line, `#` starts a comment.
pub fn parse_holidays(text: &str) -> Result<Vec<NaiveDate>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| Error::Ingest {
            row: i + 1,
            detail: format!("holiday {line:?}: {e}"),
        })?;
        out.push(d);
    }
    Ok(out)
}

/// Flags all hours of each listed date. Returns the frame and the number of
/// dates that fell outside it.
pub fn mark_holidays(frame: &TimeSeriesFrame, holidays: &[NaiveDate]) -> (TimeSeriesFrame, usize) {
    let mut flags = frame.holiday().to_vec();
    let mut outside = 0;
    for d in holidays {
        let mut hit = false;
        for (flag, ts) in flags.iter_mut().zip(frame.timestamps()) {
            if ts.date() == *d {
                *flag = true;
                hit = true;
            }
        }
        if !hit {
            log::warn!("holiday {d} is outside the frame range");
            outside += 1;
        }
    }
    let mut out = frame.clone();
    out.set_holiday(flags).expect("same length");
    (out, outside)
}

/// Parameters of a synthetic wide-sense-stationary load series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub start: NaiveDateTime,
    pub n_days: usize,
    pub hourly_mean_profile: Vec<f64>,
    pub hourly_std_profile: Vec<f64>,
    /// Applied on Friday and Saturday.
    pub weekend_scale: f64,
    pub capacity: f64,
    /// Inclusive hour-of-day interval.
    pub operating_hours: (u32, u32),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let mean = (0..24)
            .map(|h| {
                let x = (h as f64 - 14.0) / 24.0 * std::f64::consts::TAU;
                900.0 + 450.0 * x.cos()
            })
            .collect();
        Self {
            start: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            n_days: 365,
            hourly_mean_profile: mean,
            hourly_std_profile: vec![120.0; 24],
            weekend_scale: 0.8,
            capacity: 2000.0,
            operating_hours: (8, 23),
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hourly_mean_profile.len() != 24 || self.hourly_std_profile.len() != 24 {
            return Err(Error::Schema("hourly profiles need 24 values".into()));
        }
        if self.hourly_std_profile.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Range("std profile must be finite and non-negative".into()));
        }
        if self.hourly_mean_profile.iter().any(|m| !m.is_finite()) {
            return Err(Error::Range("mean profile must be finite".into()));
        }
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(Error::Range("capacity must be positive".into()));
        }
        if !self.weekend_scale.is_finite() || self.weekend_scale < 0.0 {
            return Err(Error::Range("weekend scale must be non-negative".into()));
        }
        let (a, b) = self.operating_hours;
        if a > b || b > 23 {
            return Err(Error::Range(format!("operating hours {a}..={b} invalid")));
        }
        Ok(())
    }
}

/// Whether `d` falls on the Friday/Saturday weekend.
pub fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Fri | Weekday::Sat)
}

/// Draws one standard normal per row in timestamp order, including
/// non-operating rows, so the stream layout does not depend on the mask.
pub fn generate_synthetic_wss(spec: &SyntheticSpec) -> Result<TimeSeriesFrame> {
    spec.validate()?;
    let n = spec.n_days * 24;
    let timestamps = TimeSeriesFrame::hourly_range(spec.start, n);
    let mut rng = rng::seeded(spec.seed);
    let truth: Vec<f64> = timestamps
        .iter()
        .map(|ts| {
            let h = ts.hour() as usize;
            let scale = if is_weekend(ts.date()) { spec.weekend_scale } else { 1.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            (spec.hourly_mean_profile[h] * scale + spec.hourly_std_profile[h] * z)
                .clamp(0.0, spec.capacity)
        })
        .collect();
    let (a, b) = spec.operating_hours;
    let operating: Vec<bool> = timestamps.iter().map(|t| (a..=b).contains(&t.hour())).collect();
    let load = truth.iter().zip(&operating).map(|(v, op)| op.then_some(*v)).collect();
    let mut frame = TimeSeriesFrame::new(timestamps, load)?;
    frame.set_operating(operating)?;
    frame.set_ground_truth(Some(truth))?;
    Ok(frame)
}

/// Removes exactly `round(fraction · n_operating)` operating-hour loads, chosen
/// uniformly without replacement.
pub fn apply_sparsity_mask(
    frame: &TimeSeriesFrame,
    fraction: f64,
    seed: u64,
) -> Result<TimeSeriesFrame> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Range(format!("sparsity fraction {fraction} outside [0, 1]")));
    }
    let rows = frame.operating_rows();
    let k = (fraction * rows.len() as f64).round() as usize;
    let mut rng = rng::seeded(seed);
    let mut out = frame.clone();
    for i in index::sample(&mut rng, rows.len(), k) {
        out.set_load(rows[i], None)?;
    }
    Ok(out)
}

/// Writes a frame as CSV. Floats use the shortest representation that
/// parses back to the same value, so a round trip is bit-exact.
pub fn write_frame_csv<W: Write>(frame: &TimeSeriesFrame, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "timestamp",
        "load",
        "avg_temperature",
        "wind_speed",
        "relative_humidity",
        "precipitation",
        "holiday",
        "operating",
        "imputed",
        "ground_truth",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for i in 0..frame.len() {
        let wr = frame.weather()[i];
        w.write_record([
            frame.timestamps()[i].format(DEFAULT_TIMESTAMP_FORMAT).to_string(),
            opt(frame.load()[i]),
            opt(wr.avg_temperature),
            opt(wr.wind_speed),
            opt(wr.relative_humidity),
            opt(wr.precipitation),
            u8::from(frame.holiday()[i]).to_string(),
            u8::from(frame.operating()[i]).to_string(),
            u8::from(frame.imputed()[i]).to_string(),
            opt(frame.ground_truth().map(|g| g[i])),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the layout produced by [`write_frame_csv`].
pub fn read_frame_csv<R: Read>(reader: R) -> Result<TimeSeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names = [
        "timestamp",
        "load",
        "avg_temperature",
        "wind_speed",
        "relative_humidity",
        "precipitation",
        "holiday",
        "operating",
        "imputed",
        "ground_truth",
    ];
    let idx: Vec<usize> = names.iter().map(|n| header_index(&headers, n)).collect::<Result<_>>()?;
    let mut timestamps = Vec::new();
    let mut load = Vec::new();
    let mut weather = Vec::new();
    let mut holiday = Vec::new();
    let mut operating = Vec::new();
    let mut imputed = Vec::new();
    let mut truth: Vec<Option<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingest { row, detail: e.to_string() })?;
        let f = |j: usize| record.get(idx[j]).unwrap_or("");
        let flag = |j: usize| -> Result<bool> {
            match f(j).trim() {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                other => Err(Error::Ingest { row, detail: format!("bad flag {other:?}") }),
            }
        };
        timestamps.push(parse_hour(f(0), DEFAULT_TIMESTAMP_FORMAT, row)?);
        load.push(parse_optional(f(1), row, "load")?);
        weather.push(WeatherRecord {
            avg_temperature: parse_optional(f(2), row, names[2])?,
            wind_speed: parse_optional(f(3), row, names[3])?,
            relative_humidity: parse_optional(f(4), row, names[4])?,
            precipitation: parse_optional(f(5), row, names[5])?,
        });
        holiday.push(flag(6)?);
        operating.push(flag(7)?);
        imputed.push(flag(8)?);
        truth.push(parse_optional(f(9), row, "ground_truth")?);
    }
    if timestamps.is_empty() {
        return Err(Error::Ingest { row: 0, detail: "file has no data rows".into() });
    }
    let mut frame = TimeSeriesFrame::new(timestamps, load)?;
    frame.set_weather(weather)?;
    frame.set_holiday(holiday)?;
    frame.set_operating(operating)?;
    frame.set_imputed_flags(imputed)?;
    let truth = if truth.iter().all(Option::is_some) {
        Some(truth.into_iter().flatten().collect())
    } else if truth.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::Schema("ground_truth column is partially filled".into()));
    };
    frame.set_ground_truth(truth)?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAYTON: &str = "Datetime,DAYTON_MW\n2004-12-31 01:00:00,1596.0\n2004-12-31 02:00:00,1517.0\n2004-12-31 03:00:00,1486.0\n";

    fn dayton(text: &str) -> Ingested {
        read_hourly_csv(text.as_bytes(), &CsvSchema::dayton()).unwrap()
    }

    #[test]
    fn loads_dayton_layout() {
        let got = dayton(DAYTON);
        assert_eq!(got.frame.len(), 3);
        assert_eq!(got.frame.sparsity(), 0.0);
        assert_eq!(got.frame.load()[0], Some(1_596_000.0));
        assert_eq!(got.duplicate_count, 0);
    }

    #[test]
    fn materializes_gaps() {
        let got = dayton("Datetime,DAYTON_MW\n2004-12-31 01:00:00,1.0\n2004-12-31 03:00:00,3.0\n");
        assert_eq!(got.frame.len(), 3);
        assert_eq!(got.frame.load()[1], None);
    }

    #[test]
    fn duplicates_are_last_wins() {
        let got = dayton("Datetime,DAYTON_MW\n2004-12-31 01:00:00,1.0\n2004-12-31 01:00:00,2.0\n");
        assert_eq!(got.frame.len(), 1);
        assert_eq!(got.frame.load()[0], Some(2000.0));
        assert_eq!(got.duplicate_count, 1);
    }

    #[test]
    fn reports_bad_row_and_empty_file() {
        let err = read_hourly_csv(
            "Datetime,DAYTON_MW\n2004-12-31 01:00:00,1.0\nnot a date,2.0\n".as_bytes(),
            &CsvSchema::dayton(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Ingest { row: 2, .. }), "{err}");
        let err = read_hourly_csv("Datetime,DAYTON_MW\n".as_bytes(), &CsvSchema::dayton()).unwrap_err();
        assert!(matches!(err, Error::Ingest { .. }));
        let err = read_hourly_csv("Time,MW\n".as_bytes(), &CsvSchema::dayton()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    fn weather_csv(stamps: &[&str]) -> String {
        let mut s = "timestamp,avg_temperature,wind_speed,relative_humidity,precipitation\n".to_string();
        for t in stamps {
            s.push_str(&format!("{t},20.5,3.0,70,0\n"));
        }
        s
    }

    #[test]
    fn weather_join_overlap_rules() {
        let frame = dayton(DAYTON).frame;
        let full = weather_csv(&["2004-12-31 01:00:00", "2004-12-31 02:00:00", "2004-12-31 03:00:00"]);
        let f = read_weather(&frame, full.as_bytes(), DEFAULT_TIMESTAMP_FORMAT).unwrap();
        assert!(f.weather().iter().all(|w| w.avg_temperature == Some(20.5)));

        let half = weather_csv(&["2004-12-31 02:00:00", "2004-12-31 03:00:00", "2004-12-31 04:00:00"]);
        let f = read_weather(&frame, half.as_bytes(), DEFAULT_TIMESTAMP_FORMAT).unwrap();
        let present: Vec<bool> = f.weather().iter().map(|w| w.wind_speed.is_some()).collect();
        assert_eq!(present, vec![false, true, true]);

        let off = weather_csv(&["2004-12-31 01:30:00"]);
        let err = read_weather(&frame, off.as_bytes(), DEFAULT_TIMESTAMP_FORMAT).unwrap_err();
        assert!(matches!(err, Error::Join(_)));

        let none = weather_csv(&["2010-01-01 00:00:00"]);
        let err = read_weather(&frame, none.as_bytes(), DEFAULT_TIMESTAMP_FORMAT).unwrap_err();
        assert!(matches!(err, Error::Join(_)));
    }

    #[test]
    fn holiday_marking() {
        let spec = SyntheticSpec { n_days: 3, ..Default::default() };
        let frame = generate_synthetic_wss(&spec).unwrap();
        let (f, outside) = mark_holidays(&frame, &[]);
        assert_eq!(outside, 0);
        assert!(f.holiday().iter().all(|h| !h));
        let days = parse_holidays("# national days\n2021-01-02\n\n2030-05-01 # future\n").unwrap();
        let (f, outside) = mark_holidays(&frame, &days);
        assert_eq!(outside, 1);
        assert_eq!(f.holiday().iter().filter(|h| **h).count(), 24);
        assert!(parse_holidays("2021-13-01").is_err());
    }

    #[test]
    fn zero_noise_synthetic_repeats_profile() {
        let spec = SyntheticSpec {
            n_days: 10,
            hourly_std_profile: vec![0.0; 24],
            weekend_scale: 1.0,
            ..Default::default()
        };
        let f = generate_synthetic_wss(&spec).unwrap();
        let truth = f.ground_truth().unwrap();
        for (i, v) in truth.iter().enumerate() {
            assert_eq!(*v, spec.hourly_mean_profile[i % 24]);
        }
        for (i, l) in f.load().iter().enumerate() {
            assert_eq!(l.is_some(), (8..=23).contains(&(i % 24)));
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let spec = SyntheticSpec { n_days: 20, hourly_std_profile: vec![900.0; 24], ..Default::default() };
        let a = generate_synthetic_wss(&spec).unwrap();
        let b = generate_synthetic_wss(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.ground_truth().unwrap().iter().all(|v| (0.0..=2000.0).contains(v)));
        let c = generate_synthetic_wss(&SyntheticSpec { seed: 7, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_hourly_means_within_clt_bound() {
        let spec = SyntheticSpec {
            n_days: 365,
            hourly_std_profile: vec![50.0; 24],
            weekend_scale: 1.0,
            ..Default::default()
        };
        let f = generate_synthetic_wss(&spec).unwrap();
        let truth = f.ground_truth().unwrap();
        for h in 0..24 {
            let xs: Vec<f64> = truth.iter().skip(h).step_by(24).copied().collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let bound = 3.0 * 50.0 / (365f64).sqrt();
            assert!((mean - spec.hourly_mean_profile[h]).abs() < bound, "hour {h}: {mean}");
        }
    }

    #[test]
    fn sparsity_mask_counts() {
        let spec = SyntheticSpec { n_days: 100, ..Default::default() };
        let f = generate_synthetic_wss(&spec).unwrap();
        assert_eq!(apply_sparsity_mask(&f, 0.0, 1).unwrap(), f);
        assert_eq!(apply_sparsity_mask(&f, 1.0, 1).unwrap().sparsity(), 1.0);
        let m = apply_sparsity_mask(&f, 0.6245, 1).unwrap();
        let missing = m.load().iter().zip(m.operating()).filter(|(l, op)| **op && l.is_none()).count();
        assert!(missing == 999 || missing == 1000, "{missing}");
        assert!((m.sparsity() - 0.6245).abs() <= 1.0 / 1600.0);
        assert_eq!(m.weather(), f.weather());
        assert_eq!(m.operating(), f.operating());
        assert!(matches!(apply_sparsity_mask(&f, 1.5, 1), Err(Error::Range(_))));
    }

    #[test]
    fn frame_csv_round_trip_is_bit_exact() {
        let spec = SyntheticSpec { n_days: 4, ..Default::default() };
        let f = apply_sparsity_mask(&generate_synthetic_wss(&spec).unwrap(), 0.5, 3).unwrap();
        let mut weather = f.weather().to_vec();
        weather[5].avg_temperature = Some(0.1 + 0.2);
        weather[6].precipitation = Some(1e-300);
        let mut f = f;
        f.set_weather(weather).unwrap();
        let mut buf = Vec::new();
        write_frame_csv(&f, &mut buf).unwrap();
        let back = read_frame_csv(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }
}
