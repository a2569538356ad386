//! Gaussian-kernel nonparametric pieces of the estimating equations.
//!
//! Covariates are assumed standardized to unit variance, which is what the
//! Silverman bandwidth presumes. The multivariate kernel is the product of
//! univariate standard normal densities with a common bandwidth, i.e. the
//! spherical Gaussian, so weights on `B^T X` do not change when `B` is
//! rotated on the right.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel bandwidth on the projected covariates and the failure-slice fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bw: f64,
    /// Fraction of `n` used as the number of failures in a slice.
    pub slice_fraction: f64,
}

impl KernelConfig {
    pub fn new(bw: f64, slice_fraction: f64) -> Result<Self> {
        if !(bw > 0.0 && bw.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bw}")));
        }
        if !(slice_fraction > 0.0 && slice_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("slice fraction must lie in (0, 1), got {slice_fraction}")));
        }
        Ok(Self { bw, slice_fraction })
    }

    /// Silverman bandwidth for `d` projected coordinates and `n` subjects,
    /// with the slice fraction defaulting to `min(0.2, bw)`.
    pub fn silverman(d: usize, n: usize) -> Self {
        let bw = silverman_bw(d, n);
        Self {
            bw,
            slice_fraction: bw.min(0.2),
        }
    }
}

/// `1.06 (4 / (d + 2))^{1/(d+4)} n^{-1/(d+4)}`.
pub fn silverman_bw(d: usize, n: usize) -> f64 {
    let d = d.max(1) as f64;
    let n = n.max(2) as f64;
    let e = 1.0 / (d + 4.0);
    1.06 * (4.0 / (d + 2.0)).powf(e) * n.powf(-e)
}

/// `K_h(z) = prod_k phi(z_k / h) / h` evaluated from the squared norm of `z`.
#[inline]
pub(crate) fn spherical_kernel(sq_dist: f64, d: usize, bw: f64) -> f64 {
    let norm = (2.0 * PI).powf(-0.5 * d as f64) * bw.powi(-(d as i32));
    norm * (-0.5 * sq_dist / (bw * bw)).exp()
}

/// Weights `K_h(z_i - z0)` for every row `z_i` of `z_points`.
pub fn gaussian_kernel_weights(z_points: &DMatrix<f64>, z0: &[f64], bw: f64) -> Result<DVector<f64>> {
    let d = z_points.ncols();
    if z0.len() != d {
        return Err(Error::dims("gaussian_kernel_weights", format!("z0 of length {d}"), z0.len()));
    }
    Ok(DVector::from_fn(z_points.nrows(), |i, _| {
        let sq: f64 = (0..d).map(|k| (z_points[(i, k)] - z0[k]).powi(2)).sum();
        spherical_kernel(sq, d, bw)
    }))
}

/// A kernel window whose weights sum to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegenerateWindow;

impl fmt::Display for DegenerateWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("kernel window has zero total weight")
    }
}

impl std::error::Error for DegenerateWindow {}

fn check_rows(context: &'static str, n: usize, others: &[usize]) -> Result<()> {
    for &m in others {
        if m != n {
            return Err(Error::dims(context, format!("{n} rows"), format!("{m} rows")));
        }
    }
    Ok(())
}

/// Nadaraya-Watson estimate of `E(X | Y >= u, B^T X = z0)`.
///
/// The outer error is a shape error; the inner one signals an empty or
/// zero-weight risk set, for which callers substitute the unweighted
/// risk-set mean.
pub fn cond_mean_at_risk(
    x: &DMatrix<f64>,
    y: &[f64],
    z: &DMatrix<f64>,
    u: f64,
    z0: &[f64],
    bw: f64,
) -> Result<std::result::Result<DVector<f64>, DegenerateWindow>> {
    check_rows("cond_mean_at_risk", x.nrows(), &[y.len(), z.nrows()])?;
    let w = gaussian_kernel_weights(z, z0, bw)?;
    let mut num = DVector::zeros(x.ncols());
    let mut den = 0.0;
    for i in 0..x.nrows() {
        if y[i] >= u {
            num.axpy(w[i], &x.row(i).transpose(), 1.0);
            den += w[i];
        }
    }
    if den > 0.0 && den.is_finite() {
        Ok(Ok(num / den))
    } else {
        Ok(Err(DegenerateWindow))
    }
}

/// Single-kernel conditional hazard jump at an observed time `u`.
///
/// `sum 1{Y_i = u, delta_i} K_h(Z_i - z0) / sum 1{Y_i >= u} K_h(Z_i - z0)`,
/// with exact equality of observed times.
pub fn cond_hazard(
    y: &[f64],
    delta: &[bool],
    z: &DMatrix<f64>,
    u: f64,
    z0: &[f64],
    bw: f64,
) -> Result<std::result::Result<f64, DegenerateWindow>> {
    check_rows("cond_hazard", y.len(), &[delta.len(), z.nrows()])?;
    let w = gaussian_kernel_weights(z, z0, bw)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..y.len() {
        if y[i] >= u {
            den += w[i];
            if y[i] == u && delta[i] {
                num += w[i];
            }
        }
    }
    if den > 0.0 && den.is_finite() {
        Ok(Ok(num / den))
    } else {
        Ok(Err(DegenerateWindow))
    }
}

/// Sliced-average estimate of the failure-time direction at `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiHat {
    pub value: DVector<f64>,
    /// Failures inside the window `[u, u + du)`.
    pub window_count: usize,
    /// True when fewer failures than requested remained after `u`.
    pub shrunk: bool,
}

/// Mean of `X` over the failures in `[u, u + du)` minus the mean of `X` over
/// the risk set `{Y >= u}`.
///
/// `du` is chosen so the window holds `ceil(slice_fraction * n)` failures;
/// failures tied with the last one are included.
pub fn phi_hat(x: &DMatrix<f64>, y: &[f64], delta: &[bool], u: f64, slice_fraction: f64) -> Result<PhiHat> {
    check_rows("phi_hat", x.nrows(), &[y.len(), delta.len()])?;
    if !(slice_fraction > 0.0 && slice_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("slice fraction must lie in (0, 1), got {slice_fraction}")));
    }
    let mut failures: Vec<usize> = (0..y.len()).filter(|&i| delta[i] && y[i] >= u).collect();
    failures.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    phi_window(x, y, u, &failures, window_size(slice_fraction, y.len()))
}

pub(crate) fn window_size(slice_fraction: f64, n: usize) -> usize {
    ((slice_fraction * n as f64).ceil() as usize).max(1)
}

/// `failures`: indices of the failures with `Y >= u`, sorted by time.
pub(crate) fn phi_window(x: &DMatrix<f64>, y: &[f64], u: f64, failures: &[usize], wanted: usize) -> Result<PhiHat> {
    if failures.is_empty() {
        return Err(Error::InvalidArgument("no failures at or after u: the slice window is empty".into()));
    }
    let shrunk = wanted > failures.len();
    let mut end = wanted.min(failures.len());
    while end < failures.len() && y[failures[end]] == y[failures[end - 1]] {
        end += 1;
    }
    let p = x.ncols();
    let mut window_mean = DVector::zeros(p);
    for &i in &failures[..end] {
        window_mean += x.row(i).transpose();
    }
    window_mean /= end as f64;

    let mut risk_mean = DVector::zeros(p);
    let mut at_risk = 0usize;
    for (i, _) in y.iter().enumerate().filter(|(_, &t)| t >= u) {
        risk_mean += x.row(i).transpose();
        at_risk += 1;
    }
    risk_mean /= at_risk as f64;
    Ok(PhiHat {
        value: window_mean - risk_mean,
        window_count: end,
        shrunk,
    })
}
