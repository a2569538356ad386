//! Finite-difference gradients evaluated on a worker pool.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferenceScheme {
    /// `[f(B + eps E) - f(B - eps E)] / (2 eps)`, `2pd` evaluations.
    #[default]
    Central,
    /// `[f(B + eps E) - f(B)] / eps`, `pd + 1` evaluations.
    Forward,
}

static POOLS: LazyLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = LazyLock::new(|| Mutex::new(HashMap::new()));

fn pool(threads: usize) -> Result<Arc<ThreadPool>> {
    let mut pools = POOLS.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(p) = pools.get(&threads) {
        return Ok(Arc::clone(p));
    }
    let p = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .thread_name(move |i| format!("grad-{threads}-{i}"))
        .build()
        .map_err(|e| Error::Internal(format!("cannot build worker pool: {e}")))?;
    let p = Arc::new(p);
    pools.insert(threads, Arc::clone(&p));
    Ok(p)
}

/// Central-difference gradient of `objective` at `b`.
pub fn numeric_gradient<O: Objective + ?Sized>(
    b: &DMatrix<f64>,
    objective: &O,
    epsilon: f64,
    num_threads: usize,
) -> Result<DMatrix<f64>> {
    numeric_gradient_with(b, objective, epsilon, num_threads, DifferenceScheme::Central)
}

/// Finite-difference gradient with an explicit scheme.
///
/// Every entry is computed from its own perturbed copy of `b`, so the result
/// does not depend on `num_threads`.
pub fn numeric_gradient_with<O: Objective + ?Sized>(
    b: &DMatrix<f64>,
    objective: &O,
    epsilon: f64,
    num_threads: usize,
    scheme: DifferenceScheme,
) -> Result<DMatrix<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if num_threads == 0 {
        return Err(Error::InvalidArgument("num_threads must be at least 1".into()));
    }
    let (p, d) = b.shape();
    let base = match scheme {
        DifferenceScheme::Central => None,
        DifferenceScheme::Forward => {
            let f0 = objective.value(b).map_err(|e| Error::Objective(e.to_string()))?;
            if !f0.is_finite() {
                return Err(Error::NonFiniteInitial);
            }
            Some(f0)
        }
    };

    let entry = |idx: usize| -> Result<f64> {
        let (i, j) = (idx % p, idx / p);
        let eval = |shift: f64| -> Result<f64> {
            let mut moved = b.clone();
            moved[(i, j)] += shift;
            let v = objective.value(&moved).map_err(|e| Error::Objective(e.to_string()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteObjective { row: i, col: j })
            }
        };
        match base {
            None => Ok((eval(epsilon)? - eval(-epsilon)?) / (2.0 * epsilon)),
            Some(f0) => Ok((eval(epsilon)? - f0) / epsilon),
        }
    };

    let values: Vec<f64> = if num_threads == 1 {
        (0..p * d).map(entry).collect::<Result<_>>()?
    } else {
        pool(num_threads)?.install(|| (0..p * d).into_par_iter().map(entry).collect::<Result<_>>())?
    };
    Ok(DMatrix::from_vec(p, d, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::FnObjective;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_function_has_zero_gradient() {
        let f = FnObjective::new(|_: &DMatrix<f64>| 3.5);
        let g = numeric_gradient(&DMatrix::identity(4, 2), &f, 1e-6, 1).unwrap();
        assert_eq!(g, DMatrix::zeros(4, 2));
    }

    #[test]
    fn linear_function_has_unit_gradient() {
        let f = FnObjective::new(|b: &DMatrix<f64>| b.sum());
        let g = numeric_gradient(&DMatrix::identity(5, 3), &f, 1e-6, 2).unwrap();
        assert_abs_diff_eq!(g, DMatrix::from_element(5, 3, 1.0), epsilon = 1e-8);
    }

    #[test]
    fn forward_scheme_on_quadratic() {
        let f = FnObjective::new(|b: &DMatrix<f64>| b.norm_squared());
        let b = DMatrix::from_row_slice(2, 1, &[0.6, 0.8]);
        let g = numeric_gradient_with(&b, &f, 1e-7, 1, DifferenceScheme::Forward).unwrap();
        assert_abs_diff_eq!(g, &b * 2.0, epsilon = 1e-6);
    }

    #[test]
    fn non_finite_value_names_entry() {
        let f = FnObjective::new(|b: &DMatrix<f64>| if b[(1, 0)] > 0.5 { f64::NAN } else { 0.0 });
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.5]);
        match numeric_gradient(&b, &f, 1e-3, 1) {
            Err(Error::NonFiniteObjective { row, col }) => assert_eq!((row, col), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let f = FnObjective::new(|b: &DMatrix<f64>| (b.transpose() * b).trace().sin() + b[(0, 0)].powi(3));
        let b = DMatrix::from_fn(6, 2, |i, j| ((i + 3 * j) as f64 * 0.37).cos());
        let g1 = numeric_gradient(&b, &f, 1e-6, 1).unwrap();
        let g3 = numeric_gradient(&b, &f, 1e-6, 3).unwrap();
        assert_eq!(g1, g3);
    }
}
