//! Least squares on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    /// Standard errors of `beta`.
    pub se: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Residual variance with `n - p` degrees of freedom.
    pub sigma2: f64,
}

/// Solves `min ||y - X b||` by Householder QR. Rank deficiency raises a
/// numerical error.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::Numerical(format!("{n} observations for {p} regressors")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * scale.max(1e-300)) {
        return Err(Error::Numerical("singular regression matrix".into()));
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular regression matrix".into()))?;
    let residuals = y - x * &beta;
    let sigma2 = residuals.norm_squared() / (n - p) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("singular regression matrix".into()))?;
    // (X'X)^-1 = R^-1 R^-T, whose diagonal is the squared row norms of R^-1.
    let se = DVector::from_iterator(
        p,
        (0..p).map(|i| (sigma2 * r_inv.row(i).norm_squared()).sqrt()),
    );
    Ok(OlsFit { beta, se, residuals, sigma2 })
}

/// Ridge regression `min ||y - X b||² + λ Σ_{j ∈ penalized} b_j²`, solved as an
/// augmented least-squares problem.
pub fn ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, penalized: &[bool]) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let extra: Vec<usize> = (0..p).filter(|&j| penalized[j]).collect();
    let mut xa = DMatrix::zeros(n + extra.len(), p);
    xa.rows_mut(0, n).copy_from(x);
    let mut ya = DVector::zeros(n + extra.len());
    ya.rows_mut(0, n).copy_from(y);
    for (k, &j) in extra.iter().enumerate() {
        xa[(n + k, j)] = lambda.sqrt();
    }
    let qr = xa.qr();
    let qty = qr.q().transpose() * ya;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular ridge system".into()))
}
