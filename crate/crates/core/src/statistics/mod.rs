//! Analysis suite: autocorrelation, decomposition, stationarity tests,
//! density estimation, distribution fits and Bland–Altman agreement.

mod distribution;
mod stationarity;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distribution::{chi_squared_gof, fit_distribution, kde, silverman_bandwidth, DistributionFit, DistributionKind, Kde};
pub use stationarity::{adf_critical_values, adf_test, adf_test_with_lag, kpss_test, kpss_test_with_lag};

/// A p-value, either computed or known only to lie in a table bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PValue {
    Exact { value: f64 },
    Bracket { lo: f64, hi: f64 },
}

impl PValue {
    /// Upper bound on the p-value.
    pub fn upper(&self) -> f64 {
        match *self {
            PValue::Exact { value } => value,
            PValue::Bracket { hi, .. } => hi,
        }
    }
}

impl std::fmt::Display for PValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            PValue::Exact { value } => write!(f, "{value:.4}"),
            PValue::Bracket { lo, hi } if lo <= 0.0 => write!(f, "<{hi}"),
            PValue::Bracket { lo, hi } if hi >= 1.0 => write!(f, ">{lo}"),
            PValue::Bracket { lo, hi } => write!(f, "{lo}-{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: PValue,
    pub reject_at_5pct: bool,
    pub critical_values: BTreeMap<String, f64>,
    /// Lags, bandwidths, bin counts and the like.
    pub nuisance: BTreeMap<String, f64>,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the n - 1 denominator; 0 below two values.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn check_finite(series: &[f64]) -> Result<()> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("series contains non-finite values".into()));
    }
    Ok(())
}

/// Biased sample autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::Range(format!(
            "series of length {} too short for lag {max_lag}",
            series.len()
        )));
    }
    check_finite(series)?;
    let m = mean(series);
    let c: Vec<f64> = series.iter().map(|x| x - m).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if denom <= 0.0 {
        return Err(Error::Degenerate("autocorrelation of a constant series".into()));
    }
    Ok((0..=max_lag)
        .map(|k| c[..c.len() - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub period: usize,
    /// Absent at the first and last `period / 2` points.
    pub trend: Vec<Option<f64>>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<Option<f64>>,
}

/// Additive decomposition with a centered moving-average trend.
pub fn additive_decompose(series: &[f64], period: usize) -> Result<Decomposition> {
    if period < 2 || series.len() < 2 * period {
        return Err(Error::Range(format!(
            "decomposition with period {period} needs at least {} points, got {}",
            2 * period,
            series.len()
        )));
    }
    check_finite(series)?;
    let n = series.len();
    let h = period / 2;
    let mut trend = vec![None; n];
    for (t, slot) in trend.iter_mut().enumerate().take(n - h).skip(h) {
        let window = &series[t - h..=t + h];
        let sum: f64 = if period % 2 == 0 {
            window[1..window.len() - 1].iter().sum::<f64>()
                + 0.5 * (window[0] + window[window.len() - 1])
        } else {
            window.iter().sum()
        };
        *slot = Some(sum / period as f64);
    }
    let mut phase_sum = vec![0.0; period];
    let mut phase_count = vec![0usize; period];
    for t in 0..n {
        if let Some(tr) = trend[t] {
            phase_sum[t % period] += series[t] - tr;
            phase_count[t % period] += 1;
        }
    }
    let phase_mean: Vec<f64> = phase_sum
        .iter()
        .zip(&phase_count)
        .map(|(s, c)| s / *c as f64)
        .collect();
    let centre = mean(&phase_mean);
    let seasonal: Vec<f64> = (0..n).map(|t| phase_mean[t % period] - centre).collect();
    let residual = (0..n)
        .map(|t| trend[t].map(|tr| series[t] - tr - seasonal[t]))
        .collect();
    Ok(Decomposition { period, trend, seasonal, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub means: Vec<f64>,
    pub diffs: Vec<f64>,
    pub bias: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Agreement of two prediction series: `diff = a - b` against `(a + b) / 2`,
/// limits at `bias ± 1.96 · std(diff)`.
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Schema(format!(
            "Bland-Altman needs equal non-empty series, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let means: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let bias = mean(&diffs);
    if !bias.is_finite() {
        return Err(Error::Numerical("non-finite Bland-Altman bias".into()));
    }
    let std = sample_std(&diffs);
    Ok(BlandAltman { means, diffs, bias, std, lower: bias - 1.96 * std, upper: bias + 1.96 * std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut r = crate::rng::seeded(seed);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn acf_basics() {
        let r = autocorrelation(&noise(100, 1), 5).unwrap();
        assert_eq!(r[0], 1.0);
        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = autocorrelation(&alt, 1).unwrap();
        assert!((r[1] + 1.0).abs() <= 2.0 / 1000.0);
        assert!(matches!(autocorrelation(&[3.0; 10], 2), Err(Error::Degenerate(_))));
        assert!(matches!(autocorrelation(&[1.0, 2.0], 2), Err(Error::Range(_))));
    }

    #[test]
    fn acf_white_noise_band() {
        let n = 10_000;
        let r = autocorrelation(&noise(n, 2), 20).unwrap();
        for (k, v) in r.iter().enumerate().skip(1) {
            assert!(v.abs() < 3.0 / (n as f64).sqrt(), "lag {k}: {v}");
        }
    }

    proptest! {
        #[test]
        fn acf_affine_invariance(seed in any::<u64>(), a in 0.1f64..100.0, b in -1e3f64..1e3) {
            let x = noise(200, seed);
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let rx = autocorrelation(&x, 10).unwrap();
            let ry = autocorrelation(&y, 10).unwrap();
            for (p, q) in rx.iter().zip(&ry) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn decomposition_identity(seed in any::<u64>(), period in 2usize..30) {
            let x = noise(period * 5 + 3, seed);
            let d = additive_decompose(&x, period).unwrap();
            for t in 0..x.len() {
                if let (Some(tr), Some(r)) = (d.trend[t], d.residual[t]) {
                    prop_assert!((tr + d.seasonal[t] + r - x[t]).abs() <= 1e-9);
                }
            }
            let s: f64 = d.seasonal[..period].iter().sum();
            prop_assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn sinusoid_is_captured_exactly() {
        for p in [16usize, 24, 7] {
            let x: Vec<f64> = (0..10 * p)
                .map(|t| (std::f64::consts::TAU * t as f64 / p as f64).sin() * 3.0)
                .collect();
            let d = additive_decompose(&x, p).unwrap();
            assert_eq!(d.trend.iter().filter(|t| t.is_none()).count(), 2 * (p / 2));
            for r in d.residual.iter().flatten() {
                assert!(r.abs() <= 1e-9, "period {p}: {r}");
            }
        }
    }

    #[test]
    fn line_and_sinusoid() {
        let p = 24;
        let line: Vec<f64> = (0..240).map(|t| 5.0 + 0.5 * t as f64).collect();
        let d = additive_decompose(&line, p).unwrap();
        assert!(d.seasonal.iter().all(|s| s.abs() < 1e-9));
        for (t, tr) in d.trend.iter().enumerate() {
            if let Some(tr) = tr {
                assert!((tr - line[t]).abs() < 1e-9);
            }
        }
        let season: Vec<f64> = (0..240).map(|t| (std::f64::consts::TAU * t as f64 / 24.0).cos()).collect();
        let x: Vec<f64> = line.iter().zip(&season).map(|(a, b)| a + b).collect();
        let d = additive_decompose(&x, p).unwrap();
        for t in 12..228 {
            assert!((d.trend[t].unwrap() - line[t]).abs() < 1e-6);
            assert!((d.seasonal[t] - season[t]).abs() < 1e-6);
        }
        assert!(matches!(additive_decompose(&x[..40], 24), Err(Error::Range(_))));
    }

    #[test]
    fn bland_altman_examples() {
        let a = [1.0, 2.0, 3.0];
        let r = bland_altman(&a, &a).unwrap();
        assert!(r.diffs.iter().all(|d| *d == 0.0));
        assert_eq!((r.bias, r.lower, r.upper), (0.0, 0.0, 0.0));

        let b: Vec<f64> = a.iter().map(|v| v + 5.0).collect();
        let r = bland_altman(&a, &b).unwrap();
        assert_eq!((r.bias, r.std), (-5.0, 0.0));

        let r = bland_altman(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_eq!(r.means, vec![1.5, 1.5]);
        assert_eq!(r.diffs, vec![-1.0, 1.0]);
        assert_eq!(r.bias, 0.0);
        let lim = 1.96 * 2f64.sqrt();
        assert!((r.upper - lim).abs() < 1e-12 && (r.lower + lim).abs() < 1e-12);

        assert!(matches!(bland_altman(&[1.0], &[1.0, 2.0]), Err(Error::Schema(_))));
    }
}
