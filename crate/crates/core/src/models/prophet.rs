//! Additive trend, seasonality and holiday regression fit by ridge least
//! squares.

use chrono::NaiveDateTime;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ridge;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seasonality {
    /// Period in hours.
    pub period: f64,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProphetConfig {
    pub n_changepoints: usize,
    /// Fraction of the training span that holds changepoints.
    pub changepoint_range: f64,
    pub seasonalities: Vec<Seasonality>,
    pub ridge_lambda: f64,
}

impl Default for ProphetConfig {
    fn default() -> Self {
        Self {
            n_changepoints: 25,
            changepoint_range: 0.8,
            seasonalities: vec![
                Seasonality { period: 24.0, order: 4 },
                Seasonality { period: 168.0, order: 3 },
            ],
            ridge_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierBlock {
    pub period: f64,
    /// Sine coefficients for harmonics `1..=order`.
    pub a: Vec<f64>,
    /// Cosine coefficients for harmonics `1..=order`.
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProphetLiteModel {
    pub config: ProphetConfig,
    /// Origin of the scaled time axis.
    pub start: NaiveDateTime,
    /// Training span in hours; scaled time is `hours / span`.
    pub span_hours: f64,
    /// Base level `c`.
    pub base: f64,
    /// Initial growth rate `k` per unit of scaled time.
    pub rate: f64,
    /// Changepoint locations in scaled time.
    pub changepoints: Vec<f64>,
    /// Rate adjustments `δ_j` applied after each changepoint.
    pub deltas: Vec<f64>,
    pub seasonal: Vec<FourierBlock>,
    pub holiday_effect: f64,
    pub residual_variance: f64,
}

fn epoch_hours(ts: NaiveDateTime) -> f64 {
    ts.and_utc().timestamp() as f64 / 3600.0
}

fn fourier_terms(hours: f64, s: &Seasonality) -> impl Iterator<Item = (f64, f64)> + '_ {
    (1..=s.order).map(move |n| {
        let x = std::f64::consts::TAU * n as f64 * hours / s.period;
        (x.sin(), x.cos())
    })
}

fn design_row(
    cfg: &ProphetConfig,
    changepoints: &[f64],
    start: NaiveDateTime,
    span: f64,
    ts: NaiveDateTime,
    holiday: bool,
) -> Vec<f64> {
    let t = (ts - start).num_seconds() as f64 / 3600.0 / span;
    let mut row = vec![1.0, t];
    row.extend(changepoints.iter().map(|s| (t - s).max(0.0)));
    let h = epoch_hours(ts);
    for s in &cfg.seasonalities {
        for (sin, cos) in fourier_terms(h, s) {
            row.push(sin);
            row.push(cos);
        }
    }
    row.push(if holiday { 1.0 } else { 0.0 });
    row
}

/// Fits `y(t) = g(t) + s(t) + h(t)` with a piecewise-linear trend.
pub fn fit_prophet_lite(
    timestamps: &[NaiveDateTime],
    values: &[f64],
    holiday: &[bool],
    cfg: &ProphetConfig,
) -> Result<ProphetLiteModel> {
    let n = values.len();
    if timestamps.len() != n || holiday.len() != n {
        return Err(Error::Schema("timestamps, values and holiday flags differ in length".into()));
    }
    if !(0.0..1.0).contains(&cfg.changepoint_range) || cfg.ridge_lambda < 0.0 {
        return Err(Error::Range("changepoint_range must lie in [0, 1) and ridge_lambda ≥ 0".into()));
    }
    if cfg.seasonalities.iter().any(|s| !(s.period > 0.0)) {
        return Err(Error::Range("seasonal periods must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("series contains missing or non-finite values".into()));
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Range("timestamps must be strictly increasing".into()));
    }
    let longest = cfg.seasonalities.iter().map(|s| s.period).fold(24.0, f64::max);
    let start = *timestamps.first().ok_or_else(|| Error::Range("empty series".into()))?;
    let span = (timestamps[n - 1] - start).num_seconds() as f64 / 3600.0;
    if span < 2.0 * longest {
        return Err(Error::Range(format!(
            "span of {span} h is shorter than two periods of {longest} h"
        )));
    }
    let k = cfg.n_changepoints;
    let changepoints: Vec<f64> =
        (1..=k).map(|j| cfg.changepoint_range * j as f64 / k as f64).collect();
    let rows: Vec<Vec<f64>> = timestamps
        .iter()
        .zip(holiday)
        .map(|(&ts, &h)| design_row(cfg, &changepoints, start, span, ts, h))
        .collect();
    let p = rows[0].len();
    let x = DMatrix::from_fn(n, p, |r, c| rows[r][c]);
    let y = DVector::from_column_slice(values);
    let mut penalized = vec![true; p];
    penalized[0] = false;
    let beta = ridge(&x, &y, cfg.ridge_lambda, &penalized).map_err(|e| Error::Fit {
        detail: format!("design matrix could not be solved: {e}"),
        last_objective: f64::NAN,
    })?;
    let fitted = &x * &beta;
    let residual_variance = (y - fitted).norm_squared() / n as f64;

    let mut it = beta.iter().copied();
    let base = it.next().unwrap_or(0.0);
    let rate = it.next().unwrap_or(0.0);
    let deltas: Vec<f64> = it.by_ref().take(k).collect();
    let seasonal = cfg
        .seasonalities
        .iter()
        .map(|s| {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for _ in 0..s.order {
                a.push(it.next().unwrap_or(0.0));
                b.push(it.next().unwrap_or(0.0));
            }
            FourierBlock { period: s.period, a, b }
        })
        .collect();
    let holiday_effect = it.next().unwrap_or(0.0);
    Ok(ProphetLiteModel {
        config: cfg.clone(),
        start,
        span_hours: span,
        base,
        rate,
        changepoints,
        deltas,
        seasonal,
        holiday_effect,
        residual_variance,
    })
}

impl ProphetLiteModel {
    pub fn trend(&self, ts: NaiveDateTime) -> f64 {
        let t = (ts - self.start).num_seconds() as f64 / 3600.0 / self.span_hours;
        self.base
            + self.rate * t
            + self.changepoints.iter().zip(&self.deltas).map(|(s, d)| d * (t - s).max(0.0)).sum::<f64>()
    }

    pub fn seasonality(&self, ts: NaiveDateTime) -> f64 {
        let h = epoch_hours(ts);
        self.seasonal
            .iter()
            .map(|block| {
                let s = Seasonality { period: block.period, order: block.a.len() };
                fourier_terms(h, &s)
                    .zip(block.a.iter().zip(&block.b))
                    .map(|((sin, cos), (a, b))| a * sin + b * cos)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn predict_one(&self, ts: NaiveDateTime, holiday: bool) -> f64 {
        self.trend(ts) + self.seasonality(ts) + if holiday { self.holiday_effect } else { 0.0 }
    }

    pub fn predict(&self, timestamps: &[NaiveDateTime], holiday: &[bool]) -> Result<Vec<f64>> {
        if timestamps.len() != holiday.len() {
            return Err(Error::Schema("timestamps and holiday flags differ in length".into()));
        }
        Ok(timestamps.iter().zip(holiday).map(|(&t, &h)| self.predict_one(t, h)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeSeriesFrame;
    use chrono::{Datelike, NaiveDate};

    fn hours(n: usize) -> Vec<NaiveDateTime> {
        let start = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap().and_hms_opt(0, 0, 0).unwrap();
        TimeSeriesFrame::hourly_range(start, n)
    }

    #[test]
    fn daily_sinusoid_is_recovered() {
        let ts = hours(24 * 30);
        let y: Vec<f64> = ts
            .iter()
            .map(|t| 500.0 + 80.0 * (std::f64::consts::TAU * epoch_hours(*t) / 24.0).sin())
            .collect();
        let m = fit_prophet_lite(&ts, &y, &vec![false; ts.len()], &ProphetConfig::default()).unwrap();
        assert!(m.residual_variance < 1e-6, "{}", m.residual_variance);
        assert!((m.seasonal[0].a[0] - 80.0).abs() < 1e-2);
    }

    #[test]
    fn holiday_effect_is_estimated() {
        let ts = hours(24 * 60);
        let holiday: Vec<bool> = ts.iter().map(|t| t.day() % 10 == 3).collect();
        let mut r = crate::rng::seeded(8);
        let y: Vec<f64> = ts
            .iter()
            .zip(&holiday)
            .map(|(t, &h)| {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
                700.0 + 30.0 * (std::f64::consts::TAU * epoch_hours(*t) / 168.0).cos()
                    + if h { 200.0 } else { 0.0 }
                    + 20.0 * z
            })
            .collect();
        let m = fit_prophet_lite(&ts, &y, &holiday, &ProphetConfig::default()).unwrap();
        assert!((180.0..=220.0).contains(&m.holiday_effect), "{}", m.holiday_effect);
    }

    #[test]
    fn constant_series_is_base_only() {
        let ts = hours(24 * 20);
        let m = fit_prophet_lite(&ts, &vec![42.0; ts.len()], &vec![false; ts.len()], &ProphetConfig::default())
            .unwrap();
        assert!((m.base - 42.0).abs() < 1e-9);
        let others = std::iter::once(m.rate)
            .chain(m.deltas.iter().copied())
            .chain(m.seasonal.iter().flat_map(|b| b.a.iter().chain(&b.b).copied()))
            .chain(std::iter::once(m.holiday_effect));
        for c in others {
            assert!(c.abs() < 1e-9, "{c}");
        }
    }

    #[test]
    fn changepoints_inside_span_and_guards() {
        let ts = hours(24 * 20);
        let y: Vec<f64> = (0..ts.len()).map(|i| i as f64).collect();
        let m = fit_prophet_lite(&ts, &y, &vec![false; ts.len()], &ProphetConfig::default()).unwrap();
        assert_eq!(m.changepoints.len(), 25);
        assert!(m.changepoints.iter().all(|s| *s > 0.0 && *s < 1.0));
        // A ramp extrapolates along its slope.
        let next = ts[ts.len() - 1] + chrono::Duration::hours(5);
        assert!((m.predict_one(next, false) - (ts.len() + 4) as f64).abs() < 0.5);
        let short = hours(300);
        assert!(matches!(
            fit_prophet_lite(&short, &vec![1.0; 300], &vec![false; 300], &ProphetConfig::default()),
            Err(Error::Range(_))
        ));
    }
}
