//! First-order optimization over `{B : B^T B = I}`.
//!
//! Each iteration lifts the Euclidean gradient `G` to the skew matrix
//! `A = G B^T - B G^T`, follows the Cayley curve
//! `B(tau) = (I + tau/2 A)^{-1} (I - tau/2 A) B` and picks `tau` by
//! non-monotone backtracking from a Barzilai-Borwein trial step. Every point on
//! the curve is feasible, so no projection is needed between iterations.
//!
//! [`ortho_optim`] is the general entry point. Objectives implement
//! [`Objective`]; closures can be wrapped in [`FnObjective`].

mod cayley;
mod gradient;
mod search;

use std::collections::VecDeque;
use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{gram_schmidt, StiefelPoint, FEASIBILITY_TOL};

pub use cayley::{cayley_factor, cayley_step, cayley_step_low_rank, skew_lift};
pub use gradient::{numeric_gradient, numeric_gradient_with, DifferenceScheme};
pub use search::{curvilinear_search, SearchOutcome, MIN_STEP};

/// Error raised by a user callback.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallbackError(pub String);

impl fmt::Display for CallbackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CallbackError {}

impl From<String> for CallbackError {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for CallbackError {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<Error> for CallbackError {
    fn from(e: Error) -> Self {
        Self(e.to_string())
    }
}

pub type CallbackResult<T> = std::result::Result<T, CallbackError>;

/// An objective over `p x d` matrices.
///
/// `value` is called concurrently while approximating gradients and at
/// points slightly off the manifold, so it must be deterministic and
/// re-entrant.
pub trait Objective: Sync {
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64>;

    /// Analytic Euclidean gradient. `None` selects finite differences.
    fn gradient(&self, _b: &DMatrix<f64>) -> Option<CallbackResult<DMatrix<f64>>> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
        (**self).value(b)
    }

    fn gradient(&self, b: &DMatrix<f64>) -> Option<CallbackResult<DMatrix<f64>>> {
        (**self).gradient(b)
    }
}

type GradFn = fn(&DMatrix<f64>) -> DMatrix<f64>;

/// Closure-backed objective. Extra arguments are whatever the closures capture.
pub struct FnObjective<F, G = GradFn> {
    value: F,
    gradient: Option<G>,
}

impl<F> FnObjective<F>
where
    F: Fn(&DMatrix<f64>) -> f64 + Sync,
{
    pub fn new(value: F) -> Self {
        Self { value, gradient: None }
    }
}

impl<F, G> FnObjective<F, G> {
    pub fn with_gradient<H>(self, gradient: H) -> FnObjective<F, H>
    where
        H: Fn(&DMatrix<f64>) -> DMatrix<f64> + Sync,
    {
        FnObjective {
            value: self.value,
            gradient: Some(gradient),
        }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&DMatrix<f64>) -> f64 + Sync,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64> + Sync,
{
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
        Ok((self.value)(b))
    }

    fn gradient(&self, b: &DMatrix<f64>) -> Option<CallbackResult<DMatrix<f64>>> {
        self.gradient.as_ref().map(|g| Ok(g(b)))
    }
}

/// An objective plus the direction of optimization.
#[derive(Clone, Debug)]
pub struct ObjectiveSpec<O> {
    pub objective: O,
    pub maximize: bool,
}

impl<O: Objective> ObjectiveSpec<O> {
    pub fn minimize(objective: O) -> Self {
        Self { objective, maximize: false }
    }

    pub fn maximize(objective: O) -> Self {
        Self { objective, maximize: true }
    }
}

/// Negates values and gradients when maximizing.
pub(crate) struct Signed<'a, O: ?Sized> {
    inner: &'a O,
    sign: f64,
}

impl<'a, O: Objective + ?Sized> Signed<'a, O> {
    pub(crate) fn new(inner: &'a O, maximize: bool) -> Self {
        Self {
            inner,
            sign: if maximize { -1.0 } else { 1.0 },
        }
    }
}

impl<O: Objective + ?Sized> Objective for Signed<'_, O> {
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
        self.inner.value(b).map(|v| self.sign * v)
    }

    fn gradient(&self, b: &DMatrix<f64>) -> Option<CallbackResult<DMatrix<f64>>> {
        self.inner.gradient(b).map(|g| g.map(|g| g * self.sign))
    }
}

/// Tolerances, step-search constants and iteration limits.
///
/// A tolerance of zero disables that stopping test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverControl {
    /// Relative objective change, `|f_k - f_{k-1}| / (|f_{k-1}| + 1)`.
    pub ftol: f64,
    /// Norm of the projected gradient over `sqrt(p d)`.
    pub gtol: f64,
    /// `||B_k - B_{k-1}||_F / sqrt(p)`.
    pub btol: f64,
    /// Finite-difference step.
    pub epsilon: f64,
    pub maxitr: usize,
    /// First trial step, and the fallback when the BB step is unusable.
    pub tau_init: f64,
    pub rho: f64,
    pub eta: f64,
    pub nonmonotone_window: usize,
    pub num_threads: usize,
    pub scheme: DifferenceScheme,
    /// When false, a stalled search retries from `tau_init` instead of stopping.
    pub stop_on_stall: bool,
}

impl Default for SolverControl {
    fn default() -> Self {
        Self {
            ftol: 1e-6,
            gtol: 1e-6,
            btol: 1e-6,
            epsilon: 1e-6,
            maxitr: 500,
            tau_init: 1e-3,
            rho: 1e-4,
            eta: 0.2,
            nonmonotone_window: 5,
            num_threads: default_threads(),
            scheme: DifferenceScheme::Central,
            stop_on_stall: true,
        }
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl SolverControl {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_owned()));
        for (name, v) in [("ftol", self.ftol), ("gtol", self.gtol), ("btol", self.btol)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return bad("tau_init must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.rho > 0.0 && self.rho < 0.5) {
            return bad("rho must lie in (0, 1/2)");
        }
        if self.maxitr == 0 || self.nonmonotone_window == 0 || self.num_threads == 0 {
            return bad("maxitr, nonmonotone_window and num_threads must be at least 1");
        }
        Ok(())
    }

    /// Runs exactly `maxitr` iterations: tolerances off, stalls do not stop.
    pub fn fixed_budget(maxitr: usize) -> Self {
        Self {
            ftol: 0.0,
            gtol: 0.0,
            btol: 0.0,
            maxitr,
            num_threads: 1,
            stop_on_stall: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ObjectiveTolerance,
    GradientTolerance,
    ParameterTolerance,
    Stalled,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ObjectiveTolerance => "objective_tolerance",
            Self::GradientTolerance => "gradient_tolerance",
            Self::ParameterTolerance => "parameter_tolerance",
            Self::Stalled => "stalled",
            Self::MaxIterations => "max_iterations",
        })
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub b: StiefelPoint,
    /// Objective at `b`, on the caller's scale.
    pub fval: f64,
    pub iterations: usize,
    /// True iff a tolerance or a stall ended the run.
    pub converged: bool,
    pub reason: StopReason,
    /// Objective values, starting with the initial point (`iterations + 1` entries).
    pub fval_trace: Vec<f64>,
    /// Wall-clock seconds.
    pub elapsed: f64,
    /// Times the iterate drifted past the feasibility tolerance and was re-orthonormalized.
    pub reorthonormalizations: usize,
    /// Largest `||B_k^T B_k - I||_F` over the accepted iterates.
    pub max_defect: f64,
    pub evaluations: usize,
}

/// One accepted (or stalled) iteration, as seen by an observer.
#[derive(Debug)]
pub struct IterationRecord<'a> {
    pub iteration: usize,
    pub point: &'a StiefelPoint,
    /// Objective on the caller's scale.
    pub fval: f64,
    /// Objective on the internal minimization scale.
    pub internal_fval: f64,
    /// Non-monotone reference value used by the search (minimization scale).
    pub reference: f64,
    pub tau: f64,
    /// `||A B||_F^2` at the start of the step.
    pub direction_norm_sq: f64,
    pub stalled: bool,
}

/// Minimizes (or maximizes) `spec.objective` over the Stiefel manifold from `b0`.
///
/// `b0` is orthonormalized by Gram-Schmidt when it is not already feasible.
pub fn ortho_optim<O: Objective>(
    b0: impl Into<DMatrix<f64>>,
    spec: &ObjectiveSpec<O>,
    ctrl: &SolverControl,
) -> Result<FitResult> {
    ortho_optim_with_observer(b0, spec, ctrl, |_| {})
}

pub fn ortho_optim_with_observer<O, F>(
    b0: impl Into<DMatrix<f64>>,
    spec: &ObjectiveSpec<O>,
    ctrl: &SolverControl,
    mut observer: F,
) -> Result<FitResult>
where
    O: Objective,
    F: FnMut(&IterationRecord<'_>),
{
    ctrl.validate()?;
    let start = Instant::now();
    let objective = Signed::new(&spec.objective, spec.maximize);
    let sign = if spec.maximize { -1.0 } else { 1.0 };
    let at = |iteration: usize| {
        move |e: Error| match e {
            Error::Objective(message) => Error::Callback { iteration, message },
            other => other,
        }
    };

    let mut b = StiefelPoint::from_matrix(b0.into())?;
    let (p, d) = (b.ambient_dim(), b.structural_dim());
    let mut evaluations = 0usize;

    let mut f = objective.value(b.as_matrix()).map_err(|e| Error::Callback {
        iteration: 0,
        message: e.0,
    })?;
    evaluations += 1;
    if !f.is_finite() {
        return Err(Error::NonFiniteInitial);
    }
    let mut g = gradient(&objective, &b, ctrl, &mut evaluations).map_err(at(0))?;
    let mut direction = tangent_direction(&b, &g);

    let mut history: VecDeque<f64> = VecDeque::with_capacity(ctrl.nonmonotone_window);
    history.push_back(f);
    let mut trace = vec![sign * f];
    let mut tau = ctrl.tau_init;
    let mut reorthonormalizations = 0;
    let mut max_defect = b.defect();
    let mut reason = StopReason::MaxIterations;
    let mut iterations = 0;

    for k in 1..=ctrl.maxitr {
        iterations = k;
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slope = direction.norm_squared();
        let outcome = search::search(&b, &g, &objective, ctrl, reference, tau).map_err(at(k))?;
        evaluations += outcome.evaluations;

        if outcome.stalled {
            trace.push(sign * f);
            observer(&IterationRecord {
                iteration: k,
                point: &b,
                fval: sign * f,
                internal_fval: f,
                reference,
                tau: 0.0,
                direction_norm_sq: slope,
                stalled: true,
            });
            if ctrl.stop_on_stall {
                reason = if projected_gradient_norm(&b, &g) / ((p * d) as f64).sqrt() < ctrl.gtol {
                    StopReason::GradientTolerance
                } else {
                    StopReason::Stalled
                };
                break;
            }
            tau = ctrl.tau_init;
            continue;
        }

        let mut next = outcome.point;
        let mut f_next = outcome.fval;
        let defect = next.defect();
        if defect > FEASIBILITY_TOL {
            next = gram_schmidt(next.as_matrix())?;
            reorthonormalizations += 1;
            f_next = objective.value(next.as_matrix()).map_err(|e| Error::Callback {
                iteration: k,
                message: e.0,
            })?;
            evaluations += 1;
        }
        max_defect = max_defect.max(next.defect());

        let g_next = gradient(&objective, &next, ctrl, &mut evaluations).map_err(at(k))?;
        let direction_next = tangent_direction(&next, &g_next);

        // Barzilai-Borwein step, alternating the two formulas
        let s = next.as_matrix() - b.as_matrix();
        let y = &direction_next - &direction;
        let sy = s.dot(&y).abs();
        let bb = if k % 2 == 1 { s.norm_squared() / sy } else { sy / y.norm_squared() };
        tau = if bb.is_finite() && bb > 0.0 { bb.clamp(1e-20, 1e20) } else { ctrl.tau_init };

        let f_change = (f_next - f).abs() / (f.abs() + 1.0);
        let b_change = s.norm() / (p as f64).sqrt();

        b = next;
        f = f_next;
        g = g_next;
        direction = direction_next;
        if history.len() == ctrl.nonmonotone_window {
            history.pop_front();
        }
        history.push_back(f);
        trace.push(sign * f);
        observer(&IterationRecord {
            iteration: k,
            point: &b,
            fval: sign * f,
            internal_fval: f,
            reference,
            tau: outcome.tau,
            direction_norm_sq: slope,
            stalled: false,
        });

        let g_norm = projected_gradient_norm(&b, &g) / ((p * d) as f64).sqrt();
        if g_norm < ctrl.gtol {
            reason = StopReason::GradientTolerance;
            break;
        }
        if f_change < ctrl.ftol {
            reason = StopReason::ObjectiveTolerance;
            break;
        }
        if b_change < ctrl.btol {
            reason = StopReason::ParameterTolerance;
            break;
        }
    }

    Ok(FitResult {
        b,
        fval: sign * f,
        iterations,
        converged: reason != StopReason::MaxIterations,
        reason,
        fval_trace: trace,
        elapsed: start.elapsed().as_secs_f64(),
        reorthonormalizations,
        max_defect,
        evaluations,
    })
}

/// Euclidean gradient: analytic when supplied, otherwise finite differences.
pub(crate) fn gradient<O: Objective + ?Sized>(
    objective: &O,
    b: &StiefelPoint,
    ctrl: &SolverControl,
    evaluations: &mut usize,
) -> Result<DMatrix<f64>> {
    let bm = b.as_matrix();
    match objective.gradient(bm) {
        Some(g) => {
            let g = g.map_err(|e| Error::Objective(e.0))?;
            if g.shape() != bm.shape() {
                return Err(Error::dims(
                    "gradient callback",
                    format!("{} x {}", bm.nrows(), bm.ncols()),
                    format!("{} x {}", g.nrows(), g.ncols()),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Objective("gradient has non-finite entries".into()));
            }
            Ok(g)
        }
        None => {
            let (p, d) = bm.shape();
            *evaluations += match ctrl.scheme {
                DifferenceScheme::Central => 2 * p * d,
                DifferenceScheme::Forward => p * d + 1,
            };
            numeric_gradient_with(bm, objective, ctrl.epsilon, ctrl.num_threads, ctrl.scheme)
        }
    }
}

/// `A B = G - B G^T B`, the velocity of the Cayley curve at zero (up to sign).
fn tangent_direction(b: &StiefelPoint, g: &DMatrix<f64>) -> DMatrix<f64> {
    let bm = b.as_matrix();
    g - bm * (g.transpose() * bm)
}

/// `||G - B sym(B^T G)||_F`.
pub fn projected_gradient_norm(b: &StiefelPoint, g: &DMatrix<f64>) -> f64 {
    let bm = b.as_matrix();
    let btg = bm.transpose() * g;
    let sym = (&btg + btg.transpose()) * 0.5;
    (g - bm * sym).norm()
}

impl From<StiefelPoint> for DMatrix<f64> {
    fn from(b: StiefelPoint) -> Self {
        b.into_matrix()
    }
}

impl From<&StiefelPoint> for DMatrix<f64> {
    fn from(b: &StiefelPoint) -> Self {
        b.as_matrix().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn brockett_small() -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0])),
        )
    }

    #[test]
    fn constant_objective_converges_immediately() {
        let f = FnObjective::new(|_: &DMatrix<f64>| 2.0);
        let b0 = StiefelPoint::identity(5, 2).unwrap();
        let fit = ortho_optim(b0.clone(), &ObjectiveSpec::minimize(f), &SolverControl::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.b, b0);
        assert_eq!(fit.fval_trace.len(), 2);
    }

    #[test]
    fn small_brockett_reaches_eigen_pairing() {
        let (x, dm) = brockett_small();
        let (x2, dm2) = (x.clone(), dm.clone());
        let f = FnObjective::new(move |b: &DMatrix<f64>| (b.transpose() * &x * b * &dm).trace())
            .with_gradient(move |b: &DMatrix<f64>| &x2 * b * &dm2 * 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b0 = StiefelPoint::random(4, 2, &mut rng).unwrap();
        let ctrl = SolverControl {
            ftol: 1e-14,
            gtol: 1e-10,
            btol: 1e-14,
            ..SolverControl::default()
        };
        let fit = ortho_optim(b0, &ObjectiveSpec::minimize(f), &ctrl).unwrap();
        assert_abs_diff_eq!(fit.fval, 4.0, epsilon = 1e-8);
        assert_eq!(fit.fval_trace.len(), fit.iterations + 1);
        assert!(fit.max_defect <= FEASIBILITY_TOL);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let f = FnObjective::new(|_: &DMatrix<f64>| f64::INFINITY);
        let err = ortho_optim(DMatrix::identity(3, 1), &ObjectiveSpec::minimize(f), &SolverControl::default());
        assert!(matches!(err, Err(Error::NonFiniteInitial)));
    }

    struct Failing;

    impl Objective for Failing {
        fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
            if b[(0, 0)] < 0.9 {
                Err("boom".into())
            } else {
                Ok(-b[(1, 0)])
            }
        }

        fn gradient(&self, _b: &DMatrix<f64>) -> Option<CallbackResult<DMatrix<f64>>> {
            Some(Ok(DMatrix::from_column_slice(2, 1, &[0.0, -1.0])))
        }
    }

    #[test]
    fn callback_errors_carry_iteration() {
        let ctrl = SolverControl {
            tau_init: 10.0,
            ..SolverControl::default()
        };
        match ortho_optim(DMatrix::identity(2, 1), &ObjectiveSpec::minimize(Failing), &ctrl) {
            Err(Error::Callback { iteration, message }) => {
                assert_eq!(iteration, 1);
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_start_is_orthonormalized() {
        let f = FnObjective::new(|b: &DMatrix<f64>| b[(0, 0)]);
        let m = DMatrix::from_row_slice(3, 1, &[3.0, 4.0, 0.0]);
        let ctrl = SolverControl { maxitr: 3, ..SolverControl::default() };
        let fit = ortho_optim(m, &ObjectiveSpec::minimize(f), &ctrl).unwrap();
        assert!(fit.b.defect() <= FEASIBILITY_TOL);
        assert_abs_diff_eq!(fit.fval_trace[0], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn maximize_mirrors_minimize_of_negation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(30, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = a.transpose() * &a;
        let (s1, s2) = (s.clone(), s.clone());
        let up = FnObjective::new(move |w: &DMatrix<f64>| (w.transpose() * &s1 * w)[(0, 0)]);
        let down = FnObjective::new(move |w: &DMatrix<f64>| -(w.transpose() * &s2 * w)[(0, 0)]);
        let b0 = StiefelPoint::random(6, 1, &mut rng).unwrap();
        let ctrl = SolverControl { num_threads: 1, ..SolverControl::default() };
        let mut seq_up = Vec::new();
        let mut seq_down = Vec::new();
        let r1 = ortho_optim_with_observer(b0.clone(), &ObjectiveSpec::maximize(up), &ctrl, |r| {
            seq_up.push(r.point.as_matrix().clone())
        })
        .unwrap();
        let r2 = ortho_optim_with_observer(b0, &ObjectiveSpec::minimize(down), &ctrl, |r| {
            seq_down.push(r.point.as_matrix().clone())
        })
        .unwrap();
        assert_eq!(seq_up, seq_down);
        assert_eq!(r1.fval, -r2.fval);
    }

    #[test]
    fn control_validation() {
        assert!(SolverControl::default().validate().is_ok());
        assert!(SolverControl { eta: 1.0, ..SolverControl::default() }.validate().is_err());
        assert!(SolverControl { rho: 0.5, ..SolverControl::default() }.validate().is_err());
        assert!(SolverControl { ftol: -1.0, ..SolverControl::default() }.validate().is_err());
        assert!(SolverControl::fixed_budget(10).validate().is_ok());
    }
}
