//! Backtracking along the Cayley curve with a non-monotone acceptance test.

use nalgebra::DMatrix;

use super::cayley::CayleyCurve;
use super::{Objective, ObjectiveSpec, Signed, SolverControl};
use crate::error::{Error, Result};
use crate::manifold::StiefelPoint;

/// Step sizes below this end the search as stalled.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    /// Accepted point, or the starting point when stalled.
    pub point: StiefelPoint,
    /// Objective at `point` on the solver's internal (minimization) scale.
    pub fval: f64,
    pub tau: f64,
    pub stalled: bool,
    pub evaluations: usize,
}

/// Searches `tau` on the curve `B(tau)` generated by the gradient `g`.
///
/// Starts from `tau_trial` and shrinks by `ctrl.eta` until
/// `f(B(tau)) <= f_ref - rho * tau * ||A B||_F^2`. `f_ref` is on the
/// minimization scale (negated when `spec.maximize`).
pub fn curvilinear_search<O: Objective>(
    b: &StiefelPoint,
    g: &DMatrix<f64>,
    spec: &ObjectiveSpec<O>,
    ctrl: &SolverControl,
    f_ref: f64,
    tau_trial: f64,
) -> Result<SearchOutcome> {
    let signed = Signed::new(&spec.objective, spec.maximize);
    let g = if spec.maximize { -g } else { g.clone() };
    search(b, &g, &signed, ctrl, f_ref, tau_trial)
}

pub(crate) fn search<O: Objective + ?Sized>(
    b: &StiefelPoint,
    g: &DMatrix<f64>,
    objective: &O,
    ctrl: &SolverControl,
    f_ref: f64,
    tau_trial: f64,
) -> Result<SearchOutcome> {
    let bm = b.as_matrix();
    if g.shape() != bm.shape() {
        return Err(Error::dims(
            "curvilinear_search",
            format!("{} x {}", bm.nrows(), bm.ncols()),
            format!("{} x {}", g.nrows(), g.ncols()),
        ));
    }
    let stalled = |evaluations| SearchOutcome {
        point: b.clone(),
        fval: f_ref,
        tau: 0.0,
        stalled: true,
        evaluations,
    };

    // A B = G - B G^T B
    let direction = g - bm * (g.transpose() * bm);
    let slope = direction.norm_squared();
    if slope == 0.0 || !slope.is_finite() {
        return Ok(stalled(0));
    }

    let (p, d) = bm.shape();
    let curve = CayleyCurve::new(bm, g, 2 * d < p);
    let mut tau = if tau_trial.is_finite() && tau_trial > 0.0 { tau_trial } else { ctrl.tau_init };
    let mut evaluations = 0;
    while tau >= MIN_STEP {
        let candidate = curve.point(tau)?;
        let f = objective.value(&candidate).map_err(|e| Error::Objective(e.to_string()))?;
        evaluations += 1;
        if f.is_finite() && f <= f_ref - ctrl.rho * tau * slope {
            return Ok(SearchOutcome {
                point: StiefelPoint::from_matrix_unchecked(candidate),
                fval: f,
                tau,
                stalled: false,
                evaluations,
            });
        }
        tau *= ctrl.eta;
    }
    Ok(stalled(evaluations))
}
