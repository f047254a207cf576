use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::{check_finite, mean, sample_std, PValue, TestResult};
use crate::error::{Error, Result};

/// Gaussian kernel density estimate evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 · min(σ, IQR / 1.34) · n^(-1/5)`. When the IQR is
/// zero but σ is not, σ alone is used.
pub fn silverman_bandwidth(series: &[f64]) -> f64 {
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sigma = sample_std(series);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = if iqr > 0.0 { sigma.min(iqr) } else { sigma };
    0.9 * spread * (series.len() as f64).powf(-0.2)
}

pub fn kde(series: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Kde> {
    if series.is_empty() {
        return Err(Error::Range("KDE of an empty series".into()));
    }
    check_finite(series)?;
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Range("KDE grid must be sorted".into()));
    }
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(series));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Degenerate(format!("KDE bandwidth {h} is not positive")));
    }
    let norm = 1.0 / (series.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|g| {
            norm * series
                .iter()
                .map(|x| {
                    let u = (g - x) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(Kde { bandwidth: h, grid: grid.to_vec(), density })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Gaussian,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionFit {
    Gaussian { mu: f64, sigma: f64, log_likelihood: f64 },
    Rayleigh { scale: f64, log_likelihood: f64 },
}

impl DistributionFit {
    pub fn log_likelihood(&self) -> f64 {
        match *self {
            DistributionFit::Gaussian { log_likelihood, .. }
            | DistributionFit::Rayleigh { log_likelihood, .. } => log_likelihood,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            DistributionFit::Gaussian { .. } => 2,
            DistributionFit::Rayleigh { .. } => 1,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            DistributionFit::Gaussian { mu, sigma, .. } => 0.5 * (1.0 + statrs::function::erf::erf((x - mu) / (sigma * std::f64::consts::SQRT_2))),
            DistributionFit::Rayleigh { scale, .. } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x * x / (2.0 * scale * scale)).exp()
                }
            }
        }
    }

    pub fn inverse_cdf(&self, p: f64) -> f64 {
        match *self {
            DistributionFit::Gaussian { mu, sigma, .. } => {
                Normal::new(mu, sigma).expect("validated at fit time").inverse_cdf(p)
            }
            DistributionFit::Rayleigh { scale, .. } => scale * (-2.0 * (1.0 - p).ln()).sqrt(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            DistributionFit::Gaussian { mu, sigma, .. } => {
                let u = (x - mu) / sigma;
                (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            DistributionFit::Rayleigh { scale, .. } => {
                if x < 0.0 {
                    0.0
                } else {
                    x / (scale * scale) * (-x * x / (2.0 * scale * scale)).exp()
                }
            }
        }
    }
}

/// Fits a Gaussian (sample mean, n - 1 std) or a Rayleigh
/// (`σ_R = sqrt(mean(x²) / 2)`) and reports the log-likelihood.
pub fn fit_distribution(series: &[f64], kind: DistributionKind) -> Result<DistributionFit> {
    if series.is_empty() {
        return Err(Error::Range("cannot fit an empty series".into()));
    }
    check_finite(series)?;
    let n = series.len() as f64;
    match kind {
        DistributionKind::Gaussian => {
            let mu = mean(series);
            let sigma = sample_std(series);
            if sigma <= 0.0 {
                return Err(Error::Degenerate("Gaussian fit needs positive variance".into()));
            }
            let ss: f64 = series.iter().map(|x| (x - mu).powi(2)).sum();
            let log_likelihood = -0.5 * n * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
                - ss / (2.0 * sigma * sigma);
            Ok(DistributionFit::Gaussian { mu, sigma, log_likelihood })
        }
        DistributionKind::Rayleigh => {
            if let Some(x) = series.iter().find(|x| **x < 0.0) {
                return Err(Error::Domain(format!("Rayleigh fit of negative value {x}")));
            }
            let m2 = series.iter().map(|x| x * x).sum::<f64>() / n;
            let scale = (m2 / 2.0).sqrt();
            if scale <= 0.0 {
                return Err(Error::Degenerate("Rayleigh fit of all-zero data".into()));
            }
            let s2 = scale * scale;
            let log_likelihood: f64 =
                series.iter().map(|x| (x / s2).ln() - x * x / (2.0 * s2)).sum();
            Ok(DistributionFit::Rayleigh { scale, log_likelihood })
        }
    }
}

/// Pearson chi-squared test with `⌈√n⌉` bins of equal probability under `fit`.
pub fn chi_squared_gof(series: &[f64], fit: &DistributionFit) -> Result<TestResult> {
    let n = series.len();
    if n < 50 {
        return Err(Error::Range(format!("chi-squared test needs 50 points, got {n}")));
    }
    check_finite(series)?;
    let k = (n as f64).sqrt().ceil() as usize;
    let df = k as isize - 1 - fit.n_params() as isize;
    if df < 1 {
        return Err(Error::Binning(format!("{k} bins leave no degrees of freedom")));
    }
    let expected = n as f64 / k as f64;
    if expected < 1.0 {
        return Err(Error::Binning(format!("expected count {expected} below 1")));
    }
    let mut observed = vec![0usize; k];
    for x in series {
        let bin = ((fit.cdf(*x) * k as f64).floor().max(0.0) as usize).min(k - 1);
        observed[bin] += 1;
    }
    let statistic: f64 = observed
        .iter()
        .map(|o| (*o as f64 - expected).powi(2) / expected)
        .sum();
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    let p = chi.sf(statistic);
    Ok(TestResult {
        test: "chi_squared".into(),
        statistic,
        p_value: PValue::Exact { value: p },
        reject_at_5pct: p < 0.05,
        critical_values: BTreeMap::from([("5%".into(), chi.inverse_cdf(0.95))]),
        nuisance: BTreeMap::from([("bins".into(), k as f64), ("df".into(), df as f64)]),
    })
}
