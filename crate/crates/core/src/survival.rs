//! Counting-process dimension reduction for right-censored survival data.
//!
//! The estimating equation sums, over subjects `i` and distinct failure times `u`,
//!
//! ```text
//! {X_i - E(X | Y >= u, B^T X_i)} phi(u)^T {dN_i(u) - 1(Y_i >= u) lambda(u | B^T X_i)}
//! ```
//!
//! divided by `n`, where `dN_i(u) = 1` when subject `i` fails at `u`. The
//! bracket is the counting-process martingale increment, so a subject stops
//! contributing once it leaves the risk set. The fit minimizes `||psi(B)||^2`
//! over the Stiefel manifold.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{column_means, default_names, minimize_normalized, DrFit, Standardization};
use crate::error::{Error, Result};
use crate::kernel::{phi_window, window_size, KernelConfig};
use crate::manifold::{gram_schmidt, StiefelPoint};
use crate::solver::{CallbackResult, Objective, SolverControl};

/// Covariates, observed times `Y = min(T, C)` and failure indicators `delta = 1{T <= C}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalDataset {
    x: DMatrix<f64>,
    y: Vec<f64>,
    delta: Vec<bool>,
    names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, delta: Vec<bool>) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || delta.len() != n {
            return Err(Error::dims(
                "survival dataset",
                format!("{n} times and indicators"),
                format!("{} times, {} indicators", y.len(), delta.len()),
            ));
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
            if !(y[i] > 0.0 && y[i].is_finite()) {
                return Err(Error::InvalidDataset {
                    row: Some(i),
                    message: format!("observed time must be positive and finite, got {}", y[i]),
                });
            }
        }
        if !delta.iter().any(|&d| d) {
            return Err(Error::InvalidDataset { row: None, message: "no observed failures".into() });
        }
        let names = default_names(x.ncols());
        Ok(Self { x, y, delta, names })
    }

    /// Like [`SurvivalDataset::new`] with indicators coded as `0`/`1`.
    pub fn from_indicators(x: DMatrix<f64>, y: Vec<f64>, censor: &[f64]) -> Result<Self> {
        let delta = censor
            .iter()
            .enumerate()
            .map(|(i, &c)| match c {
                1.0 => Ok(true),
                0.0 => Ok(false),
                c => Err(Error::InvalidDataset {
                    row: Some(i),
                    message: format!("failure indicator must be 0 or 1, got {c}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(x, y, delta)
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

    pub fn delta(&self) -> &[bool] {
        &self.delta
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

    pub fn failures(&self) -> usize {
        self.delta.iter().filter(|&&d| d).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurvMethod {
    /// Semiparametric inverse regression.
    #[default]
    Dm,
    /// Counting-process inverse regression.
    Dn,
    /// Forward regression.
    Forward,
}

impl SurvMethod {
    fn check_implemented(self) -> Result<()> {
        match self {
            Self::Dm => Ok(()),
            Self::Dn => Err(Error::UnimplementedMethod {
                method: "dn",
                detail: "only the dm estimating equation is available",
            }),
            Self::Forward => Err(Error::UnimplementedMethod {
                method: "forward",
                detail: "only the dm estimating equation is available",
            }),
        }
    }
}

impl FromStr for SurvMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dm" => Ok(Self::Dm),
            "dn" => Ok(Self::Dn),
            "forward" => Ok(Self::Forward),
            other => Err(Error::InvalidArgument(format!("unknown survival method '{other}'"))),
        }
    }
}

impl fmt::Display for SurvMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dm => "dm",
            Self::Dn => "dn",
            Self::Forward => "forward",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SurvFitSpec {
    pub method: SurvMethod,
    pub ndr: usize,
    /// Starting basis on the standardized scale; orthonormalized if needed.
    pub b_initial: Option<DMatrix<f64>>,
    /// Defaults to `silverman_bw(ndr, n)`.
    pub bw: Option<f64>,
    /// Defaults to `min(0.2, bw)`.
    pub slice_fraction: Option<f64>,
    pub control: SolverControl,
}

impl Default for SurvFitSpec {
    fn default() -> Self {
        Self {
            method: SurvMethod::Dm,
            ndr: 2,
            b_initial: None,
            bw: None,
            slice_fraction: None,
            control: SolverControl::default(),
        }
    }
}

pub(crate) fn resolve_kernel(ndr: usize, n: usize, bw: Option<f64>, slice: Option<f64>) -> Result<KernelConfig> {
    let default = KernelConfig::silverman(ndr, n);
    let bw = bw.unwrap_or(default.bw);
    KernelConfig::new(bw, slice.unwrap_or_else(|| bw.min(0.2)))
}

/// Failures sharing one observed time.
#[derive(Clone, Debug)]
struct FailureGroup {
    /// Risk set `{Y >= t}` is `order[..end]`.
    end: usize,
    /// Positions in `order` of the failures at `t`.
    members: Vec<usize>,
    phi: DVector<f64>,
    /// Unweighted risk-set mean, used when every kernel weight vanishes.
    risk_mean: DVector<f64>,
    /// Unweighted hazard jump, the same fallback for the hazard.
    risk_hazard: f64,
}

/// Precomputed, read-only pieces of the survival estimating equation.
///
/// Everything that does not depend on `B` (the time ordering, risk sets and
/// the sliced averages `phi(Y_j)`) is built once, so each evaluation costs
/// `O(n^2 (d + p))`. Evaluation takes `&self` and is safe to run from many
/// threads at once.
#[derive(Clone, Debug)]
pub struct SurvivalEquation {
    n: usize,
    p: usize,
    bw: f64,
    /// Subject indices by decreasing observed time.
    order: Vec<usize>,
    /// Covariates in `order`, row-major.
    x_sorted: Vec<f64>,
    /// Failure group of each sorted position, if it is a failure.
    group_of: Vec<Option<usize>>,
    groups: Vec<FailureGroup>,
    shrunk_windows: usize,
}

/// One evaluation of the estimating equation.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiEvaluation {
    /// `vec` of the `p x p` moment matrix, column-major.
    pub psi: DVector<f64>,
    /// `(i, t)` pairs whose kernel risk-set weights summed to zero.
    pub degenerate: usize,
}

impl SurvivalEquation {
    /// Builds the cache from raw arrays. Unlike [`SurvivalDataset`] this
    /// accepts data without failures, for which `psi` is identically zero.
    pub fn new(x: &DMatrix<f64>, y: &[f64], delta: &[bool], kernel: KernelConfig) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n || delta.len() != n {
            return Err(Error::dims("survival equation", format!("{n} rows"), format!("{} / {}", y.len(), delta.len())));
        }
        KernelConfig::new(kernel.bw, kernel.slice_fraction)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
        let mut x_sorted = Vec::with_capacity(n * p);
        for &i in &order {
            x_sorted.extend(x.row(i).iter());
        }

        let mut failures: Vec<usize> = (0..n).filter(|&i| delta[i]).collect();
        failures.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        let wanted = window_size(kernel.slice_fraction, n);

        let mut groups = Vec::new();
        let mut group_of = vec![None; n];
        let mut shrunk_windows = 0;
        let mut pos = 0;
        while pos < n {
            let t = y[order[pos]];
            let mut end = pos;
            while end < n && y[order[end]] == t {
                end += 1;
            }
            let members: Vec<usize> = (pos..end).filter(|&s| delta[order[s]]).collect();
            if !members.is_empty() {
                let first = failures.partition_point(|&f| y[f] < t);
                let phi = phi_window(x, y, t, &failures[first..], wanted)?;
                if phi.shrunk {
                    shrunk_windows += members.len();
                }
                let g = groups.len();
                for &s in &members {
                    group_of[s] = Some(g);
                }
                groups.push(FailureGroup {
                    end,
                    risk_hazard: members.len() as f64 / end as f64,
                    risk_mean: column_means(x, order[..end].iter().copied()),
                    members,
                    phi: phi.value,
                });
            }
            pos = end;
        }

        Ok(Self {
            n,
            p,
            bw: kernel.bw,
            order,
            x_sorted,
            group_of,
            groups,
            shrunk_windows,
        })
    }

    pub fn from_dataset(data: &SurvivalDataset, kernel: KernelConfig) -> Result<Self> {
        Self::new(data.x(), data.y(), data.delta(), kernel)
    }

    pub fn bw(&self) -> f64 {
        self.bw
    }

    /// Failures whose slice window held fewer failures than requested.
    pub fn shrunk_windows(&self) -> usize {
        self.shrunk_windows
    }

    pub fn evaluate(&self, b: &DMatrix<f64>) -> Result<PsiEvaluation> {
        let (n, p) = (self.n, self.p);
        if b.nrows() != p || b.ncols() == 0 {
            return Err(Error::dims("psi_dm", format!("{p} x d"), format!("{} x {}", b.nrows(), b.ncols())));
        }
        let d = b.ncols();
        let mut z = vec![0.0; n * d];
        for s in 0..n {
            let row = &self.x_sorted[s * p..(s + 1) * p];
            for c in 0..d {
                z[s * d + c] = row.iter().enumerate().map(|(k, v)| v * b[(k, c)]).sum();
            }
        }
        // the kernel's normalizing constant cancels in every ratio below
        let scale = 0.5 / (self.bw * self.bw);
        let mut w = vec![0.0; n * n];
        for s in 0..n {
            w[s * n + s] = 1.0;
            for t in s + 1..n {
                let sq: f64 = (0..d).map(|c| (z[s * d + c] - z[t * d + c]).powi(2)).sum();
                let v = (-sq * scale).exp();
                w[s * n + t] = v;
                w[t * n + s] = v;
            }
        }

        let mut acc = vec![DVector::<f64>::zeros(p); self.groups.len()];
        let mut s1 = vec![0.0; p];
        let mut centered = DVector::zeros(p);
        let mut degenerate = 0;
        for s in 0..n {
            let row = &w[s * n..(s + 1) * n];
            let xs = &self.x_sorted[s * p..(s + 1) * p];
            s1.iter_mut().for_each(|v| *v = 0.0);
            let mut s0 = 0.0;
            let mut k = 0;
            for (g, group) in self.groups.iter().enumerate() {
                while k < group.end {
                    let wk = row[k];
                    s0 += wk;
                    for (acc, v) in s1.iter_mut().zip(&self.x_sorted[k * p..(k + 1) * p]) {
                        *acc += wk * v;
                    }
                    k += 1;
                }
                if s >= group.end {
                    continue;
                }
                let hazard = if s0 > 0.0 && s0.is_finite() {
                    let fw: f64 = group.members.iter().map(|&m| row[m]).sum();
                    for c in 0..p {
                        centered[c] = xs[c] - s1[c] / s0;
                    }
                    fw / s0
                } else {
                    degenerate += 1;
                    for c in 0..p {
                        centered[c] = xs[c] - group.risk_mean[c];
                    }
                    group.risk_hazard
                };
                let own = if self.group_of[s] == Some(g) { 1.0 } else { 0.0 };
                let coef = own - hazard;
                if coef != 0.0 {
                    acc[g].axpy(coef, &centered, 1.0);
                }
            }
        }

        let mut m = DMatrix::zeros(p, p);
        for (group, a) in self.groups.iter().zip(&acc) {
            m.ger(1.0 / n as f64, a, &group.phi, 1.0);
        }
        Ok(PsiEvaluation {
            psi: DVector::from_column_slice(m.as_slice()),
            degenerate,
        })
    }

    pub fn objective(&self, b: &DMatrix<f64>) -> Result<f64> {
        Ok(self.evaluate(b)?.psi.norm_squared())
    }

    /// Positions are reported in the caller's original row order.
    pub fn subjects_by_time(&self) -> &[usize] {
        &self.order
    }
}

impl Objective for SurvivalEquation {
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
        Ok(self.objective(b)?)
    }
}

/// The estimating-equation vector at `b`, of length `p^2`.
pub fn psi_dm(b: &StiefelPoint, data: &SurvivalDataset, kernel: KernelConfig) -> Result<DVector<f64>> {
    Ok(SurvivalEquation::from_dataset(data, kernel)?.evaluate(b.as_matrix())?.psi)
}

/// `||psi_dm(b)||^2`.
pub fn surv_objective(b: &StiefelPoint, data: &SurvivalDataset, kernel: KernelConfig) -> Result<f64> {
    SurvivalEquation::from_dataset(data, kernel)?.objective(b.as_matrix())
}

/// A starting basis and whether it came from the random fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialEstimate {
    pub b: StiefelPoint,
    pub fallback: bool,
}

pub(crate) const FALLBACK_SEED: u64 = 0x5eed;

pub(crate) fn leading_left_singular(m: &DMatrix<f64>, ndr: usize) -> Option<DMatrix<f64>> {
    let svd = m.clone().svd(true, false);
    let u = svd.u?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = svd.singular_values.get(idx[0]).copied().unwrap_or(0.0);
    if idx.len() < ndr || top.is_nan() || top <= 0.0 || svd.singular_values[idx[ndr - 1]] <= 1e-10 * top {
        return None;
    }
    Some(DMatrix::from_fn(m.nrows(), ndr, |r, c| u[(r, idx[c])]))
}

pub(crate) fn random_fallback(p: usize, ndr: usize) -> Result<InitialEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(FALLBACK_SEED);
    Ok(InitialEstimate {
        b: StiefelPoint::random(p, ndr, &mut rng)?,
        fallback: true,
    })
}

/// Sliced inverse-regression start: failures are cut into `ceil(1 / slice_fraction)`
/// consecutive slices, each slice contributes its mean minus the risk-set mean at
/// its first time, and the leading left singular vectors are kept.
pub fn initial_b_surv(data: &SurvivalDataset, ndr: usize, slice_fraction: f64) -> Result<InitialEstimate> {
    let p = data.p();
    if ndr == 0 || ndr > p {
        return Err(Error::InvalidArgument(format!("ndr must lie in 1..={p}, got {ndr}")));
    }
    if !(slice_fraction > 0.0 && slice_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("slice fraction must lie in (0, 1), got {slice_fraction}")));
    }
    if ndr == p {
        return Ok(InitialEstimate { b: StiefelPoint::identity(p, p)?, fallback: false });
    }
    let (x, y) = (data.x(), data.y());
    let mut failures: Vec<usize> = (0..data.n()).filter(|&i| data.delta()[i]).collect();
    failures.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let nf = failures.len();
    let slices = ((1.0 / slice_fraction).ceil() as usize).max(ndr).min(nf);

    let mut m = DMatrix::zeros(p, slices);
    for s in 0..slices {
        let chunk = &failures[s * nf / slices..(s + 1) * nf / slices];
        let u = y[chunk[0]];
        let slice_mean = column_means(x, chunk.iter().copied());
        let risk_mean = column_means(x, (0..data.n()).filter(|&i| y[i] >= u));
        m.set_column(s, &(slice_mean - risk_mean));
    }
    match leading_left_singular(&m, ndr) {
        Some(u) => Ok(InitialEstimate { b: gram_schmidt(&u)?, fallback: false }),
        None => random_fallback(p, ndr),
    }
}

pub(crate) fn check_ndr(ndr: usize, n: usize, p: usize) -> Result<()> {
    if ndr == 0 || ndr > p {
        return Err(Error::InvalidArgument(format!("ndr must lie in 1..={p}, got {ndr}")));
    }
    if n < 2 * ndr {
        return Err(Error::InvalidDataset {
            row: None,
            message: format!("n = {n} is below 2 * ndr = {}", 2 * ndr),
        });
    }
    Ok(())
}

pub(crate) fn user_start(b: &DMatrix<f64>, p: usize, ndr: usize) -> Result<InitialEstimate> {
    if b.shape() != (p, ndr) {
        return Err(Error::dims("initial basis", format!("{p} x {ndr}"), format!("{} x {}", b.nrows(), b.ncols())));
    }
    Ok(InitialEstimate { b: StiefelPoint::from_matrix(b.clone())?, fallback: false })
}

/// Standardizes the covariates, picks a start and minimizes `||psi_dm||^2`.
pub fn fit_surv(data: &SurvivalDataset, spec: &SurvFitSpec) -> Result<DrFit> {
    spec.method.check_implemented()?;
    let (n, p, ndr) = (data.n(), data.p(), spec.ndr);
    check_ndr(ndr, n, p)?;
    spec.control.validate()?;
    let standardization = Standardization::fit(data.x())?;
    let xs = standardization.apply(data.x())?;
    let kernel = resolve_kernel(ndr, n, spec.bw, spec.slice_fraction)?;
    let standardized = SurvivalDataset::new(xs, data.y().to_vec(), data.delta().to_vec())?;

    let initial = match &spec.b_initial {
        Some(b) => user_start(b, p, ndr)?,
        None => initial_b_surv(&standardized, ndr, kernel.slice_fraction)?,
    };
    let equation = SurvivalEquation::from_dataset(&standardized, kernel)?;
    let fit = minimize_normalized(&initial.b, &equation, &spec.control)?;
    let degenerate_windows = equation.evaluate(fit.b.as_matrix())?.degenerate;
    Ok(DrFit {
        fit,
        initial: initial.b,
        initial_fallback: initial.fallback,
        kernel,
        standardization,
        names: data.names().to_vec(),
        degenerate_windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::random_orthogonal;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::RngExt;
    use rand_distr::StandardNormal;

    fn synthetic(n: usize, p: usize, seed: u64, ties: bool) -> (DMatrix<f64>, Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| {
                let t: f64 = (x[(i, 0)] + 0.5 * rng.sample::<f64, _>(StandardNormal)).exp();
                if ties {
                    (t * 4.0).ceil() / 4.0
                } else {
                    t
                }
            })
            .collect();
        let delta = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
        (x, y, delta)
    }

    // direct transcription of the double sum, one subject and failure time at a time
    #[allow(clippy::needless_range_loop)]
    fn naive_psi(x: &DMatrix<f64>, y: &[f64], delta: &[bool], b: &DMatrix<f64>, bw: f64, frac: f64) -> DVector<f64> {
        let (n, p) = x.shape();
        let d = b.ncols();
        let z = x * b;
        let kern = |a: usize, c: usize| -> f64 {
            let mut prod = 1.0;
            for k in 0..d {
                let u = (z[(a, k)] - z[(c, k)]) / bw;
                prod *= (-0.5 * u * u).exp() / ((2.0 * std::f64::consts::PI).sqrt() * bw);
            }
            prod
        };
        let wanted = ((frac * n as f64).ceil() as usize).max(1);
        let phi = |u: f64| -> DVector<f64> {
            let mut f: Vec<usize> = (0..n).filter(|&k| delta[k] && y[k] >= u).collect();
            f.sort_by(|&a, &c| y[a].partial_cmp(&y[c]).unwrap());
            let mut take = wanted.min(f.len());
            let last = y[f[take - 1]];
            while take < f.len() && y[f[take]] == last {
                take += 1;
            }
            let mut slice = DVector::zeros(p);
            for &k in &f[..take] {
                slice += x.row(k).transpose();
            }
            let mut risk = DVector::zeros(p);
            let mut m = 0.0;
            for k in 0..n {
                if y[k] >= u {
                    risk += x.row(k).transpose();
                    m += 1.0;
                }
            }
            slice / take as f64 - risk / m
        };
        let mut times: Vec<f64> = (0..n).filter(|&k| delta[k]).map(|k| y[k]).collect();
        times.sort_by(|a, c| a.partial_cmp(c).unwrap());
        times.dedup();
        let mut total = DMatrix::zeros(p, p);
        for i in 0..n {
            for &u in &times {
                if y[i] < u {
                    continue;
                }
                let mut num = DVector::zeros(p);
                let (mut den, mut jump) = (0.0, 0.0);
                for k in 0..n {
                    if y[k] >= u {
                        let w = kern(i, k);
                        num += x.row(k).transpose() * w;
                        den += w;
                        if y[k] == u && delta[k] {
                            jump += w;
                        }
                    }
                }
                let e = num / den;
                let lambda = jump / den;
                let dn = if delta[i] && y[i] == u { 1.0 } else { 0.0 };
                total += (x.row(i).transpose() - e) * phi(u).transpose() * (dn - lambda);
            }
        }
        DVector::from_column_slice((total / n as f64).as_slice())
    }

    fn kernel(bw: f64, frac: f64) -> KernelConfig {
        KernelConfig::new(bw, frac).unwrap()
    }

    #[test]
    fn matches_naive_oracle() {
        for (seed, n, p, d, ties) in [(1, 20, 3, 1, false), (2, 30, 4, 2, false), (3, 25, 3, 2, true), (4, 12, 2, 2, true)] {
            let (x, y, delta) = synthetic(n, p, seed, ties);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b = StiefelPoint::random(p, d, &mut rng).unwrap();
            let eq = SurvivalEquation::new(&x, &y, &delta, kernel(0.7, 0.2)).unwrap();
            let fast = eq.evaluate(b.as_matrix()).unwrap();
            let slow = naive_psi(&x, &y, &delta, b.as_matrix(), 0.7, 0.2);
            assert_eq!(fast.psi.len(), p * p);
            assert_eq!(fast.degenerate, 0);
            assert!((&fast.psi - &slow).amax() <= 1e-12, "seed {seed}: {}", (&fast.psi - &slow).amax());
        }
    }

    #[test]
    fn no_failures_gives_zero() {
        let (x, y, _) = synthetic(15, 3, 5, false);
        let eq = SurvivalEquation::new(&x, &y, &[false; 15], kernel(0.5, 0.2)).unwrap();
        let b = StiefelPoint::identity(3, 1).unwrap();
        assert_eq!(eq.evaluate(b.as_matrix()).unwrap().psi, DVector::zeros(9));
    }

    #[test]
    fn constant_covariates_give_zero() {
        let (_, y, delta) = synthetic(15, 2, 6, false);
        let x = DMatrix::from_element(15, 2, 1.5);
        let data = SurvivalDataset::new(x, y, delta).unwrap();
        let b = StiefelPoint::identity(2, 1).unwrap();
        let psi = psi_dm(&b, &data, kernel(0.5, 0.2)).unwrap();
        assert!(psi.amax() <= 1e-15);
        assert!(surv_objective(&b, &data, kernel(0.5, 0.2)).unwrap() <= 1e-30);
    }

    #[test]
    fn dataset_validation_names_rows() {
        let x = DMatrix::from_element(3, 2, 0.0);
        let err = SurvivalDataset::new(x.clone(), vec![1.0, -1.0, 2.0], vec![true; 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidDataset { row: Some(1), .. }));
        let err = SurvivalDataset::new(x.clone(), vec![1.0; 3], vec![false; 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidDataset { row: None, .. }));
        let err = SurvivalDataset::from_indicators(x, vec![1.0; 3], &[1.0, 0.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidDataset { row: Some(2), .. }));
    }

    #[test]
    fn unimplemented_methods_are_reported() {
        let (x, y, delta) = synthetic(20, 3, 7, false);
        let data = SurvivalDataset::new(x, y, delta).unwrap();
        for method in [SurvMethod::Dn, SurvMethod::Forward] {
            let spec = SurvFitSpec { method, ndr: 1, ..Default::default() };
            assert!(matches!(fit_surv(&data, &spec), Err(Error::UnimplementedMethod { .. })));
        }
        assert_eq!("DM".parse::<SurvMethod>().unwrap(), SurvMethod::Dm);
    }

    #[test]
    fn initializer_is_feasible_and_deterministic() {
        let (x, y, delta) = synthetic(80, 5, 8, false);
        let data = SurvivalDataset::new(x, y, delta).unwrap();
        let a = initial_b_surv(&data, 2, 0.2).unwrap();
        let b = initial_b_surv(&data, 2, 0.2).unwrap();
        assert_eq!(a, b);
        assert!(!a.fallback);
        assert!(a.b.defect() <= 1e-10);
        let square = initial_b_surv(&data, 5, 0.2).unwrap();
        assert_eq!(square.b, StiefelPoint::identity(5, 5).unwrap());
    }

    #[test]
    fn square_basis_fit_stays_feasible() {
        let (x, y, delta) = synthetic(40, 2, 9, false);
        let data = SurvivalDataset::new(x, y, delta).unwrap();
        let spec = SurvFitSpec {
            ndr: 2,
            control: SolverControl { maxitr: 20, num_threads: 1, ..Default::default() },
            ..Default::default()
        };
        let fit = fit_surv(&data, &spec).unwrap();
        assert!(fit.fit.b.defect() <= 1e-10);
        assert_eq!(fit.original_scale_basis().unwrap().structural_dim(), 2);
    }

    #[test]
    fn fit_decreases_objective() {
        let (x, y, delta) = synthetic(60, 3, 10, false);
        let data = SurvivalDataset::new(x, y, delta).unwrap();
        let spec = SurvFitSpec {
            ndr: 1,
            control: SolverControl { maxitr: 50, num_threads: 1, ..Default::default() },
            ..Default::default()
        };
        let fit = fit_surv(&data, &spec).unwrap();
        assert!(fit.fit.fval <= fit.fit.fval_trace[0]);
        assert_abs_diff_eq!(fit.fit.fval, *fit.fit.fval_trace.last().unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn objective_is_rotation_invariant_and_nonnegative(seed in any::<u64>()) {
            let (x, y, delta) = synthetic(40, 4, seed, seed % 2 == 0);
            let eq = SurvivalEquation::new(&x, &y, &delta, kernel(0.5, 0.2)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let b = StiefelPoint::random(4, 2, &mut rng).unwrap();
            let q = random_orthogonal(2, &mut rng);
            let f = eq.objective(b.as_matrix()).unwrap();
            let fq = eq.objective(&(b.as_matrix() * q)).unwrap();
            prop_assert!(f >= 0.0);
            prop_assert!((f - fq).abs() <= 1e-8);
        }
    }
}
