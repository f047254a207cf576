//! Per-hour Gaussian imputation and a linear baseline.

use chrono::Timelike;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::rng;

/// Gaussian parameters for one hour of the day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourStats {
    pub mu: f64,
    pub sigma: f64,
    pub count: usize,
    /// True when fewer than two observations forced the global fallback.
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyGaussianTable {
    /// Indexed by hour of day; `None` for hours that never operate.
    pub hours: Vec<Option<HourStats>>,
    pub global_mu: f64,
    pub global_sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl HourlyGaussianTable {
    /// Parameters used for imputation at `hour`.
    pub fn params(&self, hour: u32) -> (f64, f64) {
        match self.hours.get(hour as usize).copied().flatten() {
            Some(s) => (s.mu, s.sigma),
            None => (self.global_mu, self.global_sigma),
        }
    }
}

/// Mean and sample standard deviation (n - 1). `None` below two values.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

/// Estimates per-hour Gaussians from observed operating-hour loads.
///
/// `capacity` is the upper clipping bound used later by imputation.
pub fn estimate_hourly_gaussians(frame: &TimeSeriesFrame, capacity: f64) -> Result<HourlyGaussianTable> {
    if !(capacity > 0.0) {
        return Err(Error::Range(format!("capacity {capacity} must be positive")));
    }
    let mut by_hour: Vec<Vec<f64>> = vec![Vec::new(); 24];
    let mut operating_hour = [false; 24];
    for ((ts, load), op) in frame.timestamps().iter().zip(frame.load()).zip(frame.operating()) {
        if !op {
            continue;
        }
        let h = ts.hour() as usize;
        operating_hour[h] = true;
        if let Some(v) = load {
            by_hour[h].push(*v);
        }
    }
    let all: Vec<f64> = by_hour.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::Estimation("no observed operating-hour load".into()));
    }
    let (global_mu, global_sigma) =
        mean_std(&all).unwrap_or((all[0], 0.0));
    let hours = (0..24)
        .map(|h| {
            operating_hour[h].then(|| match mean_std(&by_hour[h]) {
                Some((mu, sigma)) => HourStats { mu, sigma, count: by_hour[h].len(), fallback_used: false },
                None => HourStats {
                    mu: global_mu,
                    sigma: global_sigma,
                    count: by_hour[h].len(),
                    fallback_used: true,
                },
            })
        })
        .collect();
    Ok(HourlyGaussianTable { hours, global_mu, global_sigma, lo: 0.0, hi: capacity })
}

/// Fills every missing operating-hour load with `clip(mu + sigma * Z, lo, hi)`.
///
/// One standard normal is drawn per missing cell, in timestamp order.
pub fn impute_gaussian(
    frame: &TimeSeriesFrame,
    table: &HourlyGaussianTable,
    seed: u64,
) -> Result<TimeSeriesFrame> {
    let mut rng = rng::seeded(seed);
    let mut out = frame.clone();
    for i in 0..frame.len() {
        if !frame.operating()[i] || frame.load()[i].is_some() {
            continue;
        }
        let (mu, sigma) = table.params(frame.timestamps()[i].hour());
        let z: f64 = StandardNormal.sample(&mut rng);
        out.set_imputed_load(i, (mu + sigma * z).clamp(table.lo, table.hi))?;
    }
    Ok(out)
}

/// Linear interpolation in time between the nearest observed operating-hour
/// loads; gaps before the first or after the last observation take the
/// nearest observed value.
pub fn impute_linear(frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
    let observed: Vec<(usize, f64)> = frame
        .load()
        .iter()
        .zip(frame.operating())
        .enumerate()
        .filter_map(|(i, (l, op))| if *op { l.map(|v| (i, v)) } else { None })
        .collect();
    if observed.len() < 2 {
        return Err(Error::Estimation(format!(
            "linear interpolation needs two observations, found {}",
            observed.len()
        )));
    }
    let mut out = frame.clone();
    let mut next = 0usize;
    for i in 0..frame.len() {
        if !frame.operating()[i] || frame.load()[i].is_some() {
            continue;
        }
        while next < observed.len() && observed[next].0 < i {
            next += 1;
        }
        let value = if next == 0 {
            observed[0].1
        } else if next == observed.len() {
            observed[next - 1].1
        } else {
            let (t0, v0) = observed[next - 1];
            let (t1, v1) = observed[next];
            v0 + (v1 - v0) * (i - t0) as f64 / (t1 - t0) as f64
        };
        out.set_imputed_load(i, value)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{apply_sparsity_mask, generate_synthetic_wss, SyntheticSpec};
    use chrono::NaiveDate;

    fn frame_at_hours(values: &[(u32, Option<f64>)]) -> TimeSeriesFrame {
        // One row per value, each on its own day at the given hour.
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let n = values.len() * 24;
        let ts = TimeSeriesFrame::hourly_range(start, n);
        let mut load = vec![None; n];
        let mut op = vec![false; n];
        for (d, (h, v)) in values.iter().enumerate() {
            load[d * 24 + *h as usize] = *v;
            op[d * 24 + *h as usize] = true;
        }
        let mut f = TimeSeriesFrame::new(ts, load).unwrap();
        f.set_operating(op).unwrap();
        f
    }

    #[test]
    fn two_point_hour_statistics() {
        let f = frame_at_hours(&[(9, Some(400.0)), (9, Some(600.0)), (10, Some(800.0))]);
        let t = estimate_hourly_gaussians(&f, 2000.0).unwrap();
        let h9 = t.hours[9].unwrap();
        assert_eq!(h9.mu, 500.0);
        assert!((h9.sigma - 141.421_356_237_309_5).abs() < 1e-9);
        let h10 = t.hours[10].unwrap();
        assert!(h10.fallback_used);
        assert_eq!((h10.mu, h10.sigma), (t.global_mu, t.global_sigma));
        assert_eq!(h10.count, 1);
        assert_eq!(t.hours[3], None);
    }

    #[test]
    fn constant_hour_has_zero_sigma() {
        let f = frame_at_hours(&[(9, Some(500.0)), (9, Some(500.0)), (9, Some(500.0))]);
        let t = estimate_hourly_gaussians(&f, 2000.0).unwrap();
        assert_eq!((t.hours[9].unwrap().mu, t.hours[9].unwrap().sigma), (500.0, 0.0));
    }

    #[test]
    fn no_observations_is_an_error() {
        let f = frame_at_hours(&[(9, None), (9, None)]);
        assert!(matches!(estimate_hourly_gaussians(&f, 2000.0), Err(Error::Estimation(_))));
    }

    fn table(mu: f64, sigma: f64) -> HourlyGaussianTable {
        let s = HourStats { mu, sigma, count: 10, fallback_used: false };
        HourlyGaussianTable {
            hours: vec![Some(s); 24],
            global_mu: mu,
            global_sigma: sigma,
            lo: 0.0,
            hi: 2000.0,
        }
    }

    fn missing_frame(n: usize) -> TimeSeriesFrame {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        TimeSeriesFrame::new(TimeSeriesFrame::hourly_range(start, n), vec![None; n]).unwrap()
    }

    #[test]
    fn zero_sigma_imputes_mean() {
        let out = impute_gaussian(&missing_frame(100), &table(700.0, 0.0), 1).unwrap();
        assert!(out.load().iter().all(|v| *v == Some(700.0)));
        assert_eq!(out.sparsity(), 0.0);
        assert!(out.imputed().iter().all(|f| *f));
    }

    #[test]
    fn clipping_at_capacity_and_zero() {
        let out = impute_gaussian(&missing_frame(10_000), &table(1990.0, 100.0), 2).unwrap();
        let vals: Vec<f64> = out.load().iter().flatten().copied().collect();
        assert!(vals.iter().all(|v| *v <= 2000.0));
        assert!(vals.iter().any(|v| *v == 2000.0));

        let out = impute_gaussian(&missing_frame(10_000), &table(5.0, 100.0), 2).unwrap();
        let vals: Vec<f64> = out.load().iter().flatten().copied().collect();
        assert!(vals.iter().all(|v| *v >= 0.0));
        assert!(vals.iter().filter(|v| **v == 0.0).count() > 1000);
    }

    #[test]
    fn imputed_moments_match_table() {
        let n = 5000;
        let out = impute_gaussian(&missing_frame(n), &table(1000.0, 50.0), 9).unwrap();
        let vals: Vec<f64> = out.load().iter().flatten().copied().collect();
        let (m, s) = mean_std(&vals).unwrap();
        assert!((m - 1000.0).abs() < 4.0 * 50.0 / (n as f64).sqrt(), "{m}");
        assert!((s - 50.0).abs() < 5.0, "{s}");
    }

    #[test]
    fn imputation_is_idempotent_deterministic_and_preserves_observed() {
        let spec = SyntheticSpec { n_days: 30, ..Default::default() };
        let truth = generate_synthetic_wss(&spec).unwrap();
        let sparse = apply_sparsity_mask(&truth, 0.6245, 5).unwrap();
        let t = estimate_hourly_gaussians(&sparse, 2000.0).unwrap();
        let a = impute_gaussian(&sparse, &t, 11).unwrap();
        let b = impute_gaussian(&sparse, &t, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sparsity(), 0.0);
        assert_eq!(impute_gaussian(&a, &t, 12).unwrap(), a);
        for i in 0..sparse.len() {
            if let Some(v) = sparse.load()[i] {
                assert_eq!(a.load()[i], Some(v));
                assert!(!a.imputed()[i]);
            }
            if !sparse.operating()[i] {
                assert_eq!(a.load()[i], None);
            }
        }
    }

    #[test]
    fn linear_rules() {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let ts = TimeSeriesFrame::hourly_range(start, 5);
        let f = TimeSeriesFrame::new(ts, vec![None, Some(150.0), None, Some(350.0), None]).unwrap();
        let out = impute_linear(&f).unwrap();
        assert_eq!(
            out.load(),
            &[Some(150.0), Some(150.0), Some(250.0), Some(350.0), Some(350.0)]
        );
        assert_eq!(impute_linear(&out).unwrap().load(), out.load());

        let ts = TimeSeriesFrame::hourly_range(start, 3);
        let f = TimeSeriesFrame::new(ts, vec![Some(100.0), None, Some(300.0)]).unwrap();
        assert_eq!(impute_linear(&f).unwrap().load()[1], Some(200.0));

        let ts = TimeSeriesFrame::hourly_range(start, 3);
        let f = TimeSeriesFrame::new(ts, vec![Some(100.0), None, None]).unwrap();
        assert!(matches!(impute_linear(&f), Err(Error::Estimation(_))));
    }
}
