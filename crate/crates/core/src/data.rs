//! Covariate standardization and the result type shared by the fitted models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::manifold::{gram_schmidt, StiefelPoint};
use crate::solver::{ortho_optim, CallbackResult, FitResult, Objective, ObjectiveSpec, SolverControl};

/// Column centering and scaling applied before any kernel computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: Vec<f64>,
    /// Sample standard deviations (divisor `n - 1`).
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidDataset {
                row: None,
                message: "at least two rows are needed to standardize covariates".into(),
            });
        }
        let mut center = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::InvalidDataset {
                    row: None,
                    message: format!("covariate column {j} has zero or non-finite variance"),
                });
            }
            center.push(mean);
            scale.push(sd);
        }
        Ok(Self { center, scale })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.center.len() {
            return Err(Error::dims("standardize", format!("{} columns", self.center.len()), x.ncols()));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.center[j]) / self.scale[j]))
    }

    /// Maps a basis on the standardized scale back to raw covariate units.
    ///
    /// `z = D^{-1}(x - c)` so `B^T z = (D^{-1} B)^T (x - c)`; the result is
    /// re-orthonormalized, which keeps the span.
    pub fn back_transform(&self, b: &StiefelPoint) -> Result<StiefelPoint> {
        let m = b.as_matrix();
        let raw = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / self.scale[i]);
        gram_schmidt(&raw)
    }
}

/// A fitted dimension-reduction model.
#[derive(Clone, Debug)]
pub struct DrFit {
    /// Solver output; `fit.b` is on the standardized covariate scale.
    pub fit: FitResult,
    pub initial: StiefelPoint,
    /// True when the initializer fell back to a random start.
    pub initial_fallback: bool,
    pub kernel: KernelConfig,
    pub standardization: Standardization,
    pub names: Vec<String>,
    /// Zero-weight kernel windows met at the final estimate.
    pub degenerate_windows: usize,
}

impl DrFit {
    pub fn basis(&self) -> &StiefelPoint {
        &self.fit.b
    }

    /// The estimated basis in raw covariate units.
    pub fn original_scale_basis(&self) -> Result<StiefelPoint> {
        self.standardization.back_transform(&self.fit.b)
    }

    /// Reduced covariates `B^T x_i` (rows), computed on the standardized scale.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.standardization.apply(x)? * self.fit.b.as_matrix())
    }
}

struct Rescaled<'a, O> {
    inner: &'a O,
    factor: f64,
}

impl<O: Objective> Objective for Rescaled<'_, O> {
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
        self.inner.value(b).map(|v| v * self.factor)
    }
}

/// Minimizes `f(B) / f(B0)`, reporting values on the scale of `f`.
///
/// Estimating-equation objectives are often tiny in absolute terms, where the
/// relative-change test `|df| / (|f| + 1)` would stop the search at once.
pub(crate) fn minimize_normalized<O: Objective>(b0: &StiefelPoint, objective: &O, control: &SolverControl) -> Result<FitResult> {
    let f0 = objective.value(b0.as_matrix()).map_err(|e| Error::Objective(e.to_string()))?;
    let factor = if f0 > 0.0 && f0.is_finite() { 1.0 / f0 } else { 1.0 };
    let scaled = Rescaled { inner: objective, factor };
    let mut fit = ortho_optim(b0.as_matrix().clone(), &ObjectiveSpec::minimize(&scaled), control)?;
    fit.fval /= factor;
    fit.fval_trace.iter_mut().for_each(|v| *v /= factor);
    Ok(fit)
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub(crate) fn column_means(x: &DMatrix<f64>, rows: impl Iterator<Item = usize>) -> DVector<f64> {
    let mut acc = DVector::zeros(x.ncols());
    let mut count = 0usize;
    for i in rows {
        acc += x.row(i).transpose();
        count += 1;
    }
    if count > 0 {
        acc /= count as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standardization_round_trip() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 60.0]);
        let s = Standardization::fit(&x).unwrap();
        assert_eq!(s.center, vec![2.0, 30.0]);
        let z = s.apply(&x).unwrap();
        for col in z.column_iter() {
            assert_abs_diff_eq!(col.mean(), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(col.variance() * 3.0 / 2.0, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_column_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(matches!(Standardization::fit(&x), Err(Error::InvalidDataset { .. })));
    }

    #[test]
    fn back_transform_preserves_projection() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 25.0, 3.0, 60.0, 7.0, 1.0]);
        let s = Standardization::fit(&x).unwrap();
        let b = StiefelPoint::from_matrix(DMatrix::from_column_slice(2, 1, &[0.6, 0.8])).unwrap();
        let raw = s.back_transform(&b).unwrap();
        // projections of centered raw data onto the raw basis are proportional
        let z = s.apply(&x).unwrap() * b.as_matrix();
        let centered = DMatrix::from_fn(4, 2, |i, j| x[(i, j)] - s.center[j]);
        let r = centered * raw.as_matrix();
        let ratio = z[(0, 0)] / r[(0, 0)];
        for i in 1..4 {
            assert_abs_diff_eq!(z[(i, 0)], ratio * r[(i, 0)], epsilon = 1e-12);
        }
    }
}
