use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{check_finite, mean, PValue, TestResult};
use crate::error::{Error, Result};
use crate::linalg::ols;

const MIN_LEN: usize = 20;

/// MacKinnon (2010) response-surface coefficients for the constant-only,
/// single-series case: rows are 1%, 5%, 10%; columns multiply
/// `1, 1/T, 1/T², 1/T³`.
const TAU_C: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.04],
    [-2.56677, -1.5384, -2.809, 0.0],
];

/// 1%, 5% and 10% ADF critical values for `nobs` regression rows.
pub fn adf_critical_values(nobs: usize) -> [f64; 3] {
    let inv = 1.0 / nobs as f64;
    TAU_C.map(|c| c[0] + inv * (c[1] + inv * (c[2] + inv * c[3])))
}

fn check_len(series: &[f64], test: &str) -> Result<()> {
    if series.len() < MIN_LEN {
        return Err(Error::Range(format!(
            "{test} needs at least {MIN_LEN} points, got {}",
            series.len()
        )));
    }
    check_finite(series)
}

/// ADF with a constant and `⌊12 (n/100)^¼⌋` lagged differences.
pub fn adf_test(series: &[f64]) -> Result<TestResult> {
    let lag = (12.0 * (series.len() as f64 / 100.0).powf(0.25)).floor() as usize;
    adf_test_with_lag(series, lag)
}

/// Regresses `Δx_t` on `x_{t-1}`, `Δx_{t-1..t-lag}` and a constant; the
/// statistic is the t-ratio of the level coefficient.
pub fn adf_test_with_lag(series: &[f64], lag: usize) -> Result<TestResult> {
    check_len(series, "ADF")?;
    let n = series.len();
    if n < lag + 4 {
        return Err(Error::Range(format!("ADF lag {lag} too large for {n} points")));
    }
    let dx: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let nobs = n - 1 - lag;
    let p = lag + 2;
    let mut x = DMatrix::zeros(nobs, p);
    let mut y = DVector::zeros(nobs);
    for r in 0..nobs {
        let t = r + lag;
        y[r] = dx[t];
        x[(r, 0)] = series[t];
        for j in 1..=lag {
            x[(r, j)] = dx[t - j];
        }
        x[(r, p - 1)] = 1.0;
    }
    let fit = ols(&x, &y)?;
    let statistic = fit.beta[0] / fit.se[0];
    if !statistic.is_finite() {
        return Err(Error::Numerical("ADF statistic is not finite".into()));
    }
    let crit = adf_critical_values(nobs);
    let p_value = if statistic < crit[0] {
        PValue::Bracket { lo: 0.0, hi: 0.01 }
    } else if statistic < crit[1] {
        PValue::Bracket { lo: 0.01, hi: 0.05 }
    } else if statistic < crit[2] {
        PValue::Bracket { lo: 0.05, hi: 0.10 }
    } else {
        PValue::Bracket { lo: 0.10, hi: 1.0 }
    };
    Ok(TestResult {
        test: "adf".into(),
        statistic,
        p_value,
        reject_at_5pct: statistic < crit[1],
        critical_values: BTreeMap::from([
            ("1%".into(), crit[0]),
            ("5%".into(), crit[1]),
            ("10%".into(), crit[2]),
        ]),
        nuisance: BTreeMap::from([("lags".into(), lag as f64), ("nobs".into(), nobs as f64)]),
    })
}

const KPSS_CRIT: [(f64, f64); 4] = [(0.347, 0.10), (0.463, 0.05), (0.574, 0.025), (0.739, 0.01)];

/// Level-stationarity KPSS with `⌊4 (n/100)^¼⌋` Bartlett lags.
pub fn kpss_test(series: &[f64]) -> Result<TestResult> {
    let lags = (4.0 * (series.len() as f64 / 100.0).powf(0.25)).floor() as usize;
    kpss_test_with_lag(series, lags)
}

pub fn kpss_test_with_lag(series: &[f64], lags: usize) -> Result<TestResult> {
    check_len(series, "KPSS")?;
    let n = series.len();
    if lags >= n {
        return Err(Error::Range(format!("KPSS lag {lags} too large for {n} points")));
    }
    let m = mean(series);
    let e: Vec<f64> = series.iter().map(|x| x - m).collect();
    let mut long_run: f64 = e.iter().map(|v| v * v).sum();
    for i in 1..=lags {
        let w = 1.0 - i as f64 / (lags as f64 + 1.0);
        let cov: f64 = e[i..].iter().zip(&e[..n - i]).map(|(a, b)| a * b).sum();
        long_run += 2.0 * w * cov;
    }
    long_run /= n as f64;
    if long_run <= 0.0 {
        return Err(Error::Degenerate("KPSS long-run variance is zero".into()));
    }
    let mut s = 0.0;
    let mut eta = 0.0;
    for v in &e {
        s += v;
        eta += s * s;
    }
    let statistic = eta / (n as f64 * n as f64) / long_run;

    let p_value = if statistic < KPSS_CRIT[0].0 {
        PValue::Bracket { lo: 0.10, hi: 1.0 }
    } else if statistic > KPSS_CRIT[3].0 {
        PValue::Bracket { lo: 0.0, hi: 0.01 }
    } else {
        let k = KPSS_CRIT.windows(2).position(|w| statistic <= w[1].0).unwrap_or(2);
        let ((c0, p0), (c1, p1)) = (KPSS_CRIT[k], KPSS_CRIT[k + 1]);
        PValue::Exact { value: p0 + (statistic - c0) / (c1 - c0) * (p1 - p0) }
    };
    Ok(TestResult {
        test: "kpss".into(),
        statistic,
        p_value,
        reject_at_5pct: statistic > KPSS_CRIT[1].0,
        critical_values: BTreeMap::from([
            ("10%".into(), 0.347),
            ("5%".into(), 0.463),
            ("2.5%".into(), 0.574),
            ("1%".into(), 0.739),
        ]),
        nuisance: BTreeMap::from([("lags".into(), lags as f64)]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptotic_critical_values() {
        let c = adf_critical_values(usize::MAX);
        assert!((c[1] + 2.86154).abs() < 1e-9);
    }

    #[test]
    fn short_and_constant_series() {
        assert!(matches!(adf_test(&[1.0; 10]), Err(Error::Range(_))));
        assert!(matches!(kpss_test(&[1.0; 30]), Err(Error::Degenerate(_))));
        assert!(matches!(adf_test(&[1.0; 30]), Err(Error::Numerical(_))));
    }

    #[test]
    fn kpss_p_interpolation() {
        // Stationary and trending series land on opposite ends of the table.
        let trend: Vec<f64> = (0..200).map(|t| t as f64).collect();
        let r = kpss_test(&trend).unwrap();
        assert!(r.reject_at_5pct);
        assert_eq!(r.p_value, PValue::Bracket { lo: 0.0, hi: 0.01 });
    }
}
