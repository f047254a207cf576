//! ADF and KPSS statistics against values frozen from statsmodels
//! (`adfuller(maxlag=k, autolag=None, regression="c")`, `kpss(regression="c")`).

use serde::Deserialize;
use sparseload_core::statistics::{adf_test, kpss_test, PValue};
use std::collections::BTreeMap;

#[derive(Deserialize)]
struct Fixture {
    series: Vec<f64>,
    adf_lag: usize,
    adf_stat: f64,
    adf_nobs: usize,
    adf_crit: BTreeMap<String, f64>,
    kpss_lag: usize,
    kpss_stat: f64,
    kpss_p: f64,
}

fn fixtures() -> BTreeMap<String, Fixture> {
    serde_json::from_str(include_str!("fixtures/stationarity.json")).unwrap()
}

const STAT_TOL: f64 = 1e-6;

#[test]
fn adf_matches_reference() {
    for (name, f) in fixtures() {
        let r = adf_test(&f.series).unwrap();
        assert_eq!(r.nuisance["lags"] as usize, f.adf_lag, "{name}");
        assert_eq!(r.nuisance["nobs"] as usize, f.adf_nobs, "{name}");
        assert!((r.statistic - f.adf_stat).abs() < STAT_TOL, "{name}: {} vs {}", r.statistic, f.adf_stat);
        for (k, v) in &f.adf_crit {
            assert!((r.critical_values[k] - v).abs() < 1e-9, "{name} {k}");
        }
        assert_eq!(r.reject_at_5pct, f.adf_stat < f.adf_crit["5%"], "{name}");
    }
}

#[test]
fn kpss_matches_reference() {
    for (name, f) in fixtures() {
        let r = kpss_test(&f.series).unwrap();
        assert_eq!(r.nuisance["lags"] as usize, f.kpss_lag, "{name}");
        assert!((r.statistic - f.kpss_stat).abs() < STAT_TOL, "{name}: {} vs {}", r.statistic, f.kpss_stat);
        match r.p_value {
            PValue::Exact { value } => assert!((value - f.kpss_p).abs() < 1e-9, "{name}"),
            // The reference clips to the table ends.
            PValue::Bracket { lo, hi } => assert!(f.kpss_p == lo.max(0.01) || f.kpss_p == hi.min(0.1), "{name}"),
        }
    }
}

#[test]
fn noise_and_walk_decisions() {
    let fx = fixtures();
    let noise = &fx["noise"].series;
    let walk = &fx["walk"].series;
    assert!(adf_test(noise).unwrap().reject_at_5pct);
    assert!(!adf_test(walk).unwrap().reject_at_5pct);
    assert!(!kpss_test(noise).unwrap().reject_at_5pct);
    assert!(kpss_test(walk).unwrap().reject_at_5pct);
}
