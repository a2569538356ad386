//! Semiparametric SIR and PHD estimating equations for a continuous outcome.
//!
//! ```text
//! sir: psi(B) = vec (1/n) sum_i {m_i - E(m | B^T X_i)} {X_i - E(X | B^T X_i)}^T,  m_i = E(X | Y = y_i)
//! phd: psi(B) = vec (1/n) sum_i {y_i - E(y | B^T X_i)} {X_i X_i^T - E(X X^T | B^T X_i)}
//! ```
//!
//! Every conditional mean is a Nadaraya-Watson average: on `y` for `m_i`, and
//! on `B^T X` with the spherical Gaussian kernel otherwise.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{default_names, minimize_normalized, DrFit, Standardization};
use crate::error::{Error, Result};
use crate::kernel::{silverman_bw, KernelConfig};
use crate::manifold::{gram_schmidt, StiefelPoint};
use crate::solver::{CallbackResult, Objective, SolverControl};
use crate::survival::{check_ndr, random_fallback, resolve_kernel, user_start, InitialEstimate};

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    x: DMatrix<f64>,
    y: Vec<f64>,
    names: Vec<String>,
}

impl RegressionDataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::dims("regression dataset", format!("{n} outcomes"), y.len()));
        }
        if n == 0 || x.ncols() == 0 {
            return Err(Error::InvalidDataset { row: None, message: "dataset is empty".into() });
        }
        for i in 0..n {
            if let Some(j) = (0..x.ncols()).find(|&j| !x[(i, j)].is_finite()) {
                return Err(Error::InvalidDataset {
                    row: Some(i),
                    message: format!("covariate {j} is not finite"),
                });
            }
            if !y[i].is_finite() {
                return Err(Error::InvalidDataset { row: Some(i), message: "outcome is not finite".into() });
            }
        }
        let names = default_names(x.ncols());
        Ok(Self { x, y, names })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::dims("covariate names", self.p(), names.len()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMethod {
    #[default]
    Sir,
    Phd,
}

impl FromStr for RegMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(Self::Sir),
            "phd" => Ok(Self::Phd),
            other => Err(Error::InvalidArgument(format!("unknown regression method '{other}'"))),
        }
    }
}

impl fmt::Display for RegMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sir => "sir",
            Self::Phd => "phd",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RegFitSpec {
    pub method: RegMethod,
    pub ndr: usize,
    /// Starting basis on the standardized scale.
    pub b_initial: Option<DMatrix<f64>>,
    /// Bandwidth on `B^T X`; defaults to `silverman_bw(ndr, n)`.
    pub bw: Option<f64>,
    /// Number of `y`-quantile slices for the classical start.
    pub slices: usize,
    pub control: SolverControl,
}

impl Default for RegFitSpec {
    fn default() -> Self {
        Self {
            method: RegMethod::Sir,
            ndr: 2,
            b_initial: None,
            bw: None,
            slices: 10,
            control: SolverControl::default(),
        }
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Bandwidth on `y` for `E(X | Y)`: the one-dimensional Silverman rule scaled by `sd(y)`.
pub fn outcome_bandwidth(y: &[f64]) -> f64 {
    let sd = sample_sd(y);
    silverman_bw(1, y.len()) * if sd > 0.0 { sd } else { 1.0 }
}

/// Read-only cache for repeated evaluation of one regression equation.
#[derive(Clone, Debug)]
pub struct RegressionEquation {
    method: RegMethod,
    n: usize,
    p: usize,
    bw: f64,
    x: DMatrix<f64>,
    y: Vec<f64>,
    /// `E(X | Y = y_i)` rows, SIR only.
    m: DMatrix<f64>,
}

impl RegressionEquation {
    pub fn new(x: &DMatrix<f64>, y: &[f64], method: RegMethod, bw: f64) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::dims("regression equation", format!("{n} outcomes"), y.len()));
        }
        if !(bw > 0.0 && bw.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bw}")));
        }
        let m = match method {
            RegMethod::Sir => {
                let hy = outcome_bandwidth(y);
                let mut m = DMatrix::zeros(n, p);
                for i in 0..n {
                    let mut den = 0.0;
                    for k in 0..n {
                        let w = (-0.5 * ((y[i] - y[k]) / hy).powi(2)).exp();
                        den += w;
                        for c in 0..p {
                            m[(i, c)] += w * x[(k, c)];
                        }
                    }
                    for c in 0..p {
                        m[(i, c)] /= den;
                    }
                }
                m
            }
            RegMethod::Phd => DMatrix::zeros(0, p),
        };
        Ok(Self { method, n, p, bw, x: x.clone(), y: y.to_vec(), m })
    }

    pub fn from_dataset(data: &RegressionDataset, method: RegMethod, bw: f64) -> Result<Self> {
        Self::new(data.x(), data.y(), method, bw)
    }

    pub fn method(&self) -> RegMethod {
        self.method
    }

    /// Row-normalized kernel weights on `B^T X`; the diagonal keeps every row nondegenerate.
    fn weights(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.p || b.ncols() == 0 {
            return Err(Error::dims("regression psi", format!("{} x d", self.p), format!("{} x {}", b.nrows(), b.ncols())));
        }
        let n = self.n;
        let z = &self.x * b;
        let scale = 0.5 / (self.bw * self.bw);
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            w[(i, i)] = 1.0;
            for k in i + 1..n {
                let sq = (z.row(i) - z.row(k)).norm_squared();
                let v = (-sq * scale).exp();
                w[(i, k)] = v;
                w[(k, i)] = v;
            }
        }
        for i in 0..n {
            let s = w.row(i).sum();
            w.row_mut(i).scale_mut(1.0 / s);
        }
        Ok(w)
    }

    /// `vec` of the `p x p` moment matrix, column-major.
    pub fn psi(&self, b: &DMatrix<f64>) -> Result<DVector<f64>> {
        let w = self.weights(b)?;
        let n = self.n as f64;
        let m = match self.method {
            RegMethod::Sir => {
                let dm = &self.m - &w * &self.m;
                let dx = &self.x - &w * &self.x;
                dm.transpose() * dx / n
            }
            RegMethod::Phd => {
                let y = DVector::from_column_slice(&self.y);
                let r = &y - &w * &y;
                // sum_i r_i E(XX^T | z_i) = sum_k (sum_i r_i w_ik) X_k X_k^T
                let a = w.transpose() * &r;
                let coef = r - a;
                let weighted = DMatrix::from_fn(self.n, self.p, |k, c| coef[k] * self.x[(k, c)]);
                self.x.transpose() * weighted / n
            }
        };
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    pub fn objective(&self, b: &DMatrix<f64>) -> Result<f64> {
        Ok(self.psi(b)?.norm_squared())
    }
}

impl Objective for RegressionEquation {
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
        Ok(self.objective(b)?)
    }
}

pub fn psi_sir(b: &StiefelPoint, data: &RegressionDataset, kernel: KernelConfig) -> Result<DVector<f64>> {
    RegressionEquation::from_dataset(data, RegMethod::Sir, kernel.bw)?.psi(b.as_matrix())
}

pub fn psi_phd(b: &StiefelPoint, data: &RegressionDataset, kernel: KernelConfig) -> Result<DVector<f64>> {
    RegressionEquation::from_dataset(data, RegMethod::Phd, kernel.bw)?.psi(b.as_matrix())
}

/// `Sigma^{-1/2}` of the sample covariance, or `None` when it is singular.
fn inverse_sqrt_cov(x: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&l| l <= 1e-12 * top) {
        return None;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some((&eig.eigenvectors * d * eig.eigenvectors.transpose(), mean))
}

fn leading_eigenvectors(m: DMatrix<f64>, ndr: usize, by_magnitude: bool) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m);
    let key = |l: f64| if by_magnitude { l.abs() } else { l };
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| key(eig.eigenvalues[b]).total_cmp(&key(eig.eigenvalues[a])));
    let top = key(eig.eigenvalues[idx[0]]).abs();
    if top.is_nan() || top <= 0.0 || key(eig.eigenvalues[idx[ndr - 1]]).abs() <= 1e-10 * top {
        return None;
    }
    Some(DMatrix::from_fn(eig.eigenvectors.nrows(), ndr, |r, c| eig.eigenvectors[(r, idx[c])]))
}

/// Classical sliced inverse regression with `slices` groups of `y`-quantiles.
pub fn classical_sir(x: &DMatrix<f64>, y: &[f64], ndr: usize, slices: usize) -> Option<DMatrix<f64>> {
    let (n, p) = x.shape();
    let (root, mean) = inverse_sqrt_cov(x)?;
    let z = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]) * &root;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let h = slices.clamp(1, n);
    let mut m = DMatrix::zeros(p, p);
    for s in 0..h {
        let chunk = &order[s * n / h..(s + 1) * n / h];
        if chunk.is_empty() {
            continue;
        }
        let mut mean = DVector::zeros(p);
        for &i in chunk {
            mean += z.row(i).transpose();
        }
        mean /= chunk.len() as f64;
        m.ger(chunk.len() as f64 / n as f64, &mean, &mean, 1.0);
    }
    leading_eigenvectors(m, ndr, false).map(|eta| root * eta)
}

/// Classical principal Hessian directions from OLS residuals, keeping the
/// eigenvectors of largest absolute eigenvalue.
pub fn classical_phd(x: &DMatrix<f64>, y: &[f64], ndr: usize) -> Option<DMatrix<f64>> {
    let (n, p) = x.shape();
    let (root, mean) = inverse_sqrt_cov(x)?;
    let z = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]) * &root;
    let yv = DVector::from_column_slice(y);
    let ybar = yv.mean();
    // whitened covariates are uncorrelated with unit variance, so OLS slopes are z^T y / (n - 1)
    let slope = z.transpose() * &yv / (n as f64 - 1.0);
    let r = yv.map(|v| v - ybar) - &z * slope;
    let weighted = DMatrix::from_fn(n, p, |i, c| r[i] * z[(i, c)]);
    let m = z.transpose() * weighted / n as f64;
    leading_eigenvectors(m, ndr, true).map(|eta| root * eta)
}

/// Classical start for `method`, orthonormalized, with a seeded random fallback.
pub fn initial_b_reg(data: &RegressionDataset, ndr: usize, method: RegMethod, slices: usize) -> Result<InitialEstimate> {
    let p = data.p();
    if ndr == 0 || ndr > p {
        return Err(Error::InvalidArgument(format!("ndr must lie in 1..={p}, got {ndr}")));
    }
    if ndr == p {
        return Ok(InitialEstimate { b: StiefelPoint::identity(p, p)?, fallback: false });
    }
    let raw = match method {
        RegMethod::Sir => classical_sir(data.x(), data.y(), ndr, slices),
        RegMethod::Phd => classical_phd(data.x(), data.y(), ndr),
    };
    match raw.map(|m| gram_schmidt(&m)) {
        Some(Ok(b)) => Ok(InitialEstimate { b, fallback: false }),
        Some(Err(Error::RankDeficient { .. })) | None => random_fallback(p, ndr),
        Some(Err(e)) => Err(e),
    }
}

pub fn fit_reg(data: &RegressionDataset, spec: &RegFitSpec) -> Result<DrFit> {
    let (n, p, ndr) = (data.n(), data.p(), spec.ndr);
    check_ndr(ndr, n, p)?;
    spec.control.validate()?;
    let standardization = Standardization::fit(data.x())?;
    let xs = standardization.apply(data.x())?;
    let kernel = resolve_kernel(ndr, n, spec.bw, None)?;
    let standardized = RegressionDataset::new(xs, data.y().to_vec())?;
    let initial = match &spec.b_initial {
        Some(b) => user_start(b, p, ndr)?,
        None => initial_b_reg(&standardized, ndr, spec.method, spec.slices)?,
    };
    let equation = RegressionEquation::from_dataset(&standardized, spec.method, kernel.bw)?;
    let fit = minimize_normalized(&initial.b, &equation, &spec.control)?;
    Ok(DrFit {
        fit,
        initial: initial.b,
        initial_fallback: initial.fallback,
        kernel,
        standardization,
        names: data.names().to_vec(),
        degenerate_windows: 0,
    })
}
