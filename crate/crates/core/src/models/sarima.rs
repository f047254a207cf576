//! Seasonal ARIMA by conditional sum of squares.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ols;

/// Cost substituted for non-finite objective values so the simplex backs
/// away from explosive parameter regions.
const PENALTY: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeasonalOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SarimaConfig {
    pub order: Order,
    pub seasonal: SeasonalOrder,
    /// Estimate a constant mean of the differenced series. When unset the
    /// mean is estimated only for undifferenced models.
    pub include_mean: Option<bool>,
    pub max_iters: u64,
}

impl Default for SarimaConfig {
    fn default() -> Self {
        Self {
            order: Order { p: 5, d: 1, q: 1 },
            seasonal: SeasonalOrder::default(),
            include_mean: None,
            max_iters: 20_000,
        }
    }
}

impl SarimaConfig {
    pub fn with_order(p: usize, d: usize, q: usize) -> Self {
        Self { order: Order { p, d, q }, ..Default::default() }
    }

    fn n_coefficients(&self) -> usize {
        self.order.p + self.order.q + self.seasonal.p + self.seasonal.q
    }

    fn uses_mean(&self) -> bool {
        self.include_mean.unwrap_or(self.order.d + self.seasonal.d == 0)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.seasonal;
        if (s.p + s.d + s.q > 0) && s.s < 2 {
            return Err(Error::Range(format!("seasonal period {} must be at least 2", s.s)));
        }
        if self.max_iters == 0 {
            return Err(Error::Range("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficients of `a(B) = φ(B)·Φ(B^s)` with `φ(B) = 1 − Σ φ_i B^i`,
/// returned as lag weights `c_i` in `z_t = Σ c_i z_{t-i} + …`.
fn ar_lags(phi: &[f64], sphi: &[f64], s: usize) -> Vec<f64> {
    let a: Vec<f64> = std::iter::once(1.0).chain(phi.iter().map(|v| -v)).collect();
    let mut sa = vec![0.0; sphi.len() * s + 1];
    sa[0] = 1.0;
    for (j, v) in sphi.iter().enumerate() {
        sa[(j + 1) * s] = -v;
    }
    poly_mul(&a, &sa)[1..].iter().map(|v| -v).collect()
}

/// Coefficients of `b(B) = θ(B)·Θ(B^s)` with `θ(B) = 1 + Σ θ_j B^j`,
/// without the leading 1.
fn ma_lags(theta: &[f64], stheta: &[f64], s: usize) -> Vec<f64> {
    let b: Vec<f64> = std::iter::once(1.0).chain(theta.iter().copied()).collect();
    let mut sb = vec![0.0; stheta.len() * s + 1];
    sb[0] = 1.0;
    for (j, v) in stheta.iter().enumerate() {
        sb[(j + 1) * s] = *v;
    }
    poly_mul(&b, &sb)[1..].to_vec()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Differencing polynomial `(1 − B)^d (1 − B^s)^D`, leading 1 included.
fn differencing(cfg: &SarimaConfig) -> Vec<f64> {
    let mut poly = vec![1.0];
    for _ in 0..cfg.order.d {
        poly = poly_mul(&poly, &[1.0, -1.0]);
    }
    for _ in 0..cfg.seasonal.d {
        let mut sd = vec![0.0; cfg.seasonal.s + 1];
        sd[0] = 1.0;
        sd[cfg.seasonal.s] = -1.0;
        poly = poly_mul(&poly, &sd);
    }
    poly
}

fn apply_differencing(series: &[f64], delta: &[f64]) -> Vec<f64> {
    let k = delta.len() - 1;
    (k..series.len())
        .map(|t| delta.iter().enumerate().map(|(i, c)| c * series[t - i]).sum())
        .collect()
}

/// Splits a packed parameter vector into `(φ, θ, Φ, Θ)`.
fn unpack<'a>(cfg: &SarimaConfig, x: &'a [f64]) -> [&'a [f64]; 4] {
    let (phi, rest) = x.split_at(cfg.order.p);
    let (theta, rest) = rest.split_at(cfg.order.q);
    let (sphi, stheta) = rest.split_at(cfg.seasonal.p);
    [phi, theta, sphi, stheta]
}

/// Innovations of the demeaned differenced series, zero before the first
/// fully determined index.
fn residuals(z: &[f64], ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let start = ar.len();
    let mut e = vec![0.0; z.len()];
    for t in start..z.len() {
        let mut v = z[t];
        for (i, c) in ar.iter().enumerate() {
            v -= c * z[t - 1 - i];
        }
        for (j, c) in ma.iter().enumerate() {
            if t > j {
                v -= c * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

struct Css<'a> {
    cfg: &'a SarimaConfig,
    z: &'a [f64],
}

impl Css<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let [phi, theta, sphi, stheta] = unpack(self.cfg, x);
        let s = self.cfg.seasonal.s;
        let ar = ar_lags(phi, sphi, s);
        let ma = ma_lags(theta, stheta, s);
        let e = residuals(self.z, &ar, &ma);
        let css: f64 = e[ar.len()..].iter().map(|v| v * v).sum();
        if css.is_finite() { css } else { PENALTY }
    }
}

impl CostFunction for Css<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value(x))
    }
}

/// Hannan–Rissanen starting values: a long autoregression supplies
/// innovation estimates, then `z_t` is regressed on its own lags and the
/// lagged innovations. Seasonal coefficients start at zero.
fn hannan_rissanen(cfg: &SarimaConfig, z: &[f64]) -> Vec<f64> {
    let (p, q) = (cfg.order.p, cfg.order.q);
    let mut x0 = vec![0.0; cfg.n_coefficients()];
    if p + q == 0 {
        return x0;
    }
    let n = z.len();
    let innovations = if q > 0 {
        let m = (2 * (p + q)).max(((n as f64).ln().powi(2)) as usize).min(n / 4);
        let Some(fit) = lag_regression(z, m) else { return x0 };
        let mut e = vec![0.0; n];
        for (r, v) in fit.into_iter().enumerate() {
            e[r + m] = v;
        }
        Some((e, m))
    } else {
        None
    };
    let (e, offset) = innovations.unwrap_or((vec![], 0));
    let start = offset + p.max(q);
    if n <= start + p + q + 1 {
        return x0;
    }
    let rows = n - start;
    let mut x = DMatrix::zeros(rows, p + q);
    let mut y = DVector::zeros(rows);
    for r in 0..rows {
        let t = r + start;
        y[r] = z[t];
        for i in 0..p {
            x[(r, i)] = z[t - 1 - i];
        }
        for j in 0..q {
            x[(r, p + j)] = e[t - 1 - j];
        }
    }
    if let Ok(fit) = ols(&x, &y) {
        let beta: Vec<f64> = fit.beta.iter().copied().collect();
        if beta.iter().all(|b| b.is_finite()) {
            x0[..p + q].copy_from_slice(&beta);
        }
    }
    x0
}

/// Shrinks the moving-average part of `x0` towards zero until the objective
/// is finite. Regression starts can land outside the invertible region when
/// the true root sits near the unit circle, and the recursion then
/// overflows at every simplex vertex.
fn finite_start(cfg: &SarimaConfig, problem: &Css, mut x0: Vec<f64>) -> Vec<f64> {
    let (p, q) = (cfg.order.p, cfg.order.q);
    let ma: Vec<usize> = (p..p + q).chain(p + q + cfg.seasonal.p..x0.len()).collect();
    for _ in 0..20 {
        if problem.value(&x0) < PENALTY {
            return x0;
        }
        for &i in &ma {
            x0[i] *= 0.9;
        }
    }
    vec![0.0; x0.len()]
}

/// Residuals of an OLS autoregression of order `m` without intercept.
fn lag_regression(z: &[f64], m: usize) -> Option<Vec<f64>> {
    if m == 0 || z.len() <= 2 * m {
        return None;
    }
    let rows = z.len() - m;
    let mut x = DMatrix::zeros(rows, m);
    let mut y = DVector::zeros(rows);
    for r in 0..rows {
        y[r] = z[r + m];
        for i in 0..m {
            x[(r, i)] = z[r + m - 1 - i];
        }
    }
    ols(&x, &y).ok().map(|f| f.residuals.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaModel {
    pub config: SarimaConfig,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub seasonal_phi: Vec<f64>,
    pub seasonal_theta: Vec<f64>,
    /// Mean of the differenced series (zero when not estimated).
    pub mean: f64,
    pub sigma2: f64,
    pub css: f64,
    /// Observed series the recursion continues from.
    pub history: Vec<f64>,
}

/// Fits the model to a complete series.
pub fn fit_sarima(series: &[f64], cfg: &SarimaConfig) -> Result<SarimaModel> {
    cfg.validate()?;
    let k = cfg.n_coefficients();
    let min_len = 10 * (k + 1);
    if series.len() <= min_len {
        return Err(Error::Range(format!(
            "SARIMA needs more than {min_len} observations, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("series contains missing or non-finite values".into()));
    }
    let delta = differencing(cfg);
    let w = apply_differencing(series, &delta);
    let ar_len = cfg.order.p + cfg.seasonal.p * cfg.seasonal.s;
    if w.len() <= ar_len + k + 1 {
        return Err(Error::Range("too few observations left after differencing".into()));
    }
    let mean = if cfg.uses_mean() { w.iter().sum::<f64>() / w.len() as f64 } else { 0.0 };
    let z: Vec<f64> = w.iter().map(|v| v - mean).collect();
    let problem = Css { cfg, z: &z };

    let x0 = finite_start(cfg, &problem, hannan_rissanen(cfg, &z));
    let (params, css) = if k == 0 {
        (x0.clone(), problem.value(&x0))
    } else {
        let start_cost = problem.value(&x0);
        let mut simplex = vec![x0.clone()];
        for i in 0..k {
            let mut v = x0.clone();
            v[i] += if v[i].abs() > 0.5 { -0.1 } else { 0.1 };
            simplex.push(v);
        }
        let tol = 1e-14 * start_cost.max(1.0);
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(tol)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let res = Executor::new(problem, solver)
            .configure(|s| s.max_iters(cfg.max_iters))
            .run()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let state = res.state();
        let best = state.get_best_param().cloned().unwrap_or(x0);
        let best_cost = state.get_best_cost();
        if matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::MaxItersReached)
        ) {
            return Err(Error::Fit {
                detail: format!("simplex did not converge in {} iterations", cfg.max_iters),
                last_objective: best_cost,
            });
        }
        (best, best_cost)
    };
    if css >= PENALTY {
        return Err(Error::Fit { detail: "objective is not finite".into(), last_objective: css });
    }
    let effective = (z.len() - ar_len).saturating_sub(k).max(1);
    let [phi, theta, sphi, stheta] = unpack(cfg, &params);
    Ok(SarimaModel {
        config: cfg.clone(),
        phi: phi.to_vec(),
        theta: theta.to_vec(),
        seasonal_phi: sphi.to_vec(),
        seasonal_theta: stheta.to_vec(),
        mean,
        sigma2: css / effective as f64,
        css,
        history: series.to_vec(),
    })
}

impl SarimaModel {
    fn lags(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.config.seasonal.s;
        (ar_lags(&self.phi, &self.seasonal_phi, s), ma_lags(&self.theta, &self.seasonal_theta, s))
    }

    /// Recursive forecasts `1..=horizon` steps past the end of the history,
    /// with future innovations set to zero.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        let delta = differencing(&self.config);
        let (ar, ma) = self.lags();
        let mut y = self.history.clone();
        let mut z: Vec<f64> =
            apply_differencing(&y, &delta).iter().map(|v| v - self.mean).collect();
        let mut e = residuals(&z, &ar, &ma);
        for _ in 0..horizon {
            let zhat = next_value(&z, &e, &ar, &ma, z.len());
            z.push(zhat);
            e.push(0.0);
            y.push(integrate(&y, &delta, zhat + self.mean, y.len()));
        }
        y.split_off(self.history.len())
    }

    /// One-step-ahead predictions of `series[t]` for each `t` in `targets`,
    /// using the actual values before `t`. Indices that lack enough history
    /// for the differencing yield a range error.
    pub fn one_step(&self, series: &[f64], targets: &[usize]) -> Result<Vec<f64>> {
        let delta = differencing(&self.config);
        let lead = delta.len() - 1;
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("series contains missing or non-finite values".into()));
        }
        let (ar, ma) = self.lags();
        let z: Vec<f64> = apply_differencing(series, &delta).iter().map(|v| v - self.mean).collect();
        let e = residuals(&z, &ar, &ma);
        targets
            .iter()
            .map(|&t| {
                if t < lead + ar.len() || t >= series.len() {
                    return Err(Error::Range(format!("no one-step history for index {t}")));
                }
                let zhat = next_value(&z, &e, &ar, &ma, t - lead);
                Ok(integrate(series, &delta, zhat + self.mean, t))
            })
            .collect()
    }
}

/// Conditional expectation of `z[t]` from values strictly before `t`.
fn next_value(z: &[f64], e: &[f64], ar: &[f64], ma: &[f64], t: usize) -> f64 {
    let mut v = 0.0;
    for (i, c) in ar.iter().enumerate() {
        if t > i {
            v += c * z[t - 1 - i];
        }
    }
    for (j, c) in ma.iter().enumerate() {
        if t > j {
            v += c * e[t - 1 - j];
        }
    }
    v
}

/// Undoes the differencing at index `t`: `y_t = w_t − Σ_{i≥1} δ_i y_{t-i}`.
fn integrate(y: &[f64], delta: &[f64], w: f64, t: usize) -> f64 {
    w - delta.iter().enumerate().skip(1).map(|(i, c)| c * y[t - i]).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut r = crate::rng::seeded(seed);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    fn manual(cfg: SarimaConfig, phi: Vec<f64>, mean: f64, history: Vec<f64>) -> SarimaModel {
        SarimaModel {
            config: cfg,
            phi,
            theta: vec![],
            seasonal_phi: vec![],
            seasonal_theta: vec![],
            mean,
            sigma2: 1.0,
            css: 0.0,
            history,
        }
    }

    #[test]
    fn polynomial_expansion() {
        // (1 − 0.5B)(1 − 0.3B^4) = 1 − 0.5B − 0.3B^4 + 0.15B^5
        assert_eq!(ar_lags(&[0.5], &[0.3], 4), vec![0.5, 0.0, 0.0, 0.3, -0.15]);
        // (1 + 0.2B)(1 + 0.4B^2)
        let ma = ma_lags(&[0.2], &[0.4], 2);
        assert!((ma[0] - 0.2).abs() < 1e-15 && ma[1] == 0.4 && (ma[2] - 0.08).abs() < 1e-15);
        let cfg = SarimaConfig {
            order: Order { p: 0, d: 1, q: 0 },
            seasonal: SeasonalOrder { p: 0, d: 1, q: 0, s: 3 },
            ..Default::default()
        };
        assert_eq!(differencing(&cfg), vec![1.0, -1.0, 0.0, -1.0, 1.0]);
    }

    #[test]
    fn closed_form_ar_forecast() {
        let m = manual(SarimaConfig::with_order(1, 0, 0), vec![0.5], 0.0, vec![3.0, 100.0]);
        assert_eq!(m.forecast(2), vec![50.0, 25.0]);
        assert_eq!(m.forecast(1)[0], m.forecast(5)[0]);
    }

    #[test]
    fn zero_coefficients_follow_drift() {
        let m = manual(SarimaConfig::with_order(0, 1, 0), vec![], 2.5, vec![1.0, 4.0, 10.0]);
        assert_eq!(m.forecast(3), vec![12.5, 15.0, 17.5]);
    }

    #[test]
    fn random_walk_repeats_last_value() {
        let x = noise(300, 5);
        let m = fit_sarima(&x, &SarimaConfig::with_order(0, 1, 0)).unwrap();
        assert!(m.forecast(4).iter().all(|v| *v == x[299]));
    }

    #[test]
    fn line_is_continued() {
        let x: Vec<f64> = (0..200).map(|t| 10.0 + 0.75 * t as f64).collect();
        let m = fit_sarima(&x, &SarimaConfig::with_order(1, 1, 0)).unwrap();
        for (h, v) in m.forecast(5).iter().enumerate() {
            let expected = 10.0 + 0.75 * (200 + h) as f64;
            assert!((v - expected).abs() < 1e-6, "step {h}: {v} vs {expected}");
        }
    }

    #[test]
    fn ar1_recovery_and_one_step() {
        let e = noise(2000, 11);
        let mut x = vec![0.0; 2000];
        for t in 1..2000 {
            x[t] = 0.7 * x[t - 1] + e[t];
        }
        let m = fit_sarima(&x, &SarimaConfig::with_order(1, 0, 0)).unwrap();
        assert!((0.6..=0.8).contains(&m.phi[0]), "{}", m.phi[0]);
        // Yule-Walker estimate of an AR(1) is the lag-1 autocorrelation.
        let yw = crate::statistics::autocorrelation(&x, 1).unwrap()[1];
        assert!((m.phi[0] - yw).abs() < 0.01, "{} vs {yw}", m.phi[0]);
        let p = m.one_step(&x, &[1000]).unwrap();
        let expected = m.mean + m.phi[0] * (x[999] - m.mean);
        assert!((p[0] - expected).abs() < 1e-12);
        // The recursion's first step equals the one-step prediction at the end.
        let mut ext = x.clone();
        ext.push(0.0);
        let last = m.one_step(&ext, &[2000]).unwrap()[0];
        assert!((last - m.forecast(1)[0]).abs() < 1e-9);
    }

    #[test]
    fn overdifferenced_noise_fits() {
        // (1 − B)ε is MA(1) with θ = −1: the optimum sits on the
        // invertibility boundary and the start must not overflow.
        let x: Vec<f64> = noise(6000, 21).iter().map(|v| 1000.0 + 50.0 * v).collect();
        let m = fit_sarima(&x, &SarimaConfig::default()).unwrap();
        assert!(m.theta[0] < -0.9 && m.theta[0] >= -1.0 - 1e-9, "θ = {}", m.theta[0]);
        let f = m.forecast(3);
        assert!(f.iter().all(|v| (v - 1000.0).abs() < 10.0), "{f:?}");
    }

    #[test]
    fn non_invertible_start_is_pulled_inside() {
        let x: Vec<f64> = noise(6000, 21).iter().map(|v| 1000.0 + 50.0 * v).collect();
        let cfg = SarimaConfig::with_order(1, 1, 1);
        let w = apply_differencing(&x, &differencing(&cfg));
        let problem = Css { cfg: &cfg, z: &w };
        assert_eq!(problem.value(&[0.1, -1.2]), PENALTY);
        let x0 = finite_start(&cfg, &problem, vec![0.1, -1.2]);
        assert_eq!(x0[0], 0.1);
        assert!(x0[1].abs() < 1.0 && problem.value(&x0) < PENALTY, "{x0:?}");
    }

    #[test]
    fn arma_with_seasonal_terms_fits() {
        let e = noise(1200, 3);
        let mut x = vec![0.0; 1200];
        for t in 13..1200 {
            x[t] = 0.5 * x[t - 1] + 0.3 * x[t - 12] - 0.15 * x[t - 13] + e[t] + 0.4 * e[t - 1];
        }
        let cfg = SarimaConfig {
            order: Order { p: 1, d: 0, q: 1 },
            seasonal: SeasonalOrder { p: 1, d: 0, q: 0, s: 12 },
            ..Default::default()
        };
        let m = fit_sarima(&x, &cfg).unwrap();
        assert!((m.phi[0] - 0.5).abs() < 0.1, "{m:?}");
        assert!((m.theta[0] - 0.4).abs() < 0.1, "{m:?}");
        assert!((m.seasonal_phi[0] - 0.3).abs() < 0.1, "{m:?}");
        assert!(m.forecast(24).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn guards() {
        assert!(matches!(
            fit_sarima(&[1.0; 50], &SarimaConfig::default()),
            Err(Error::Range(_))
        ));
        let cfg = SarimaConfig { max_iters: 1, ..SarimaConfig::with_order(2, 0, 1) };
        assert!(matches!(fit_sarima(&noise(500, 1), &cfg), Err(Error::Fit { .. })));
    }
}
