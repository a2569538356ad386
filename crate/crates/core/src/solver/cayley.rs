//! Skew-symmetric lift of the gradient and the Cayley-transform curve.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::StiefelPoint;

/// `A = G B^T - B G^T`, a `p x p` skew-symmetric matrix.
pub fn skew_lift(b: &StiefelPoint, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bm = b.as_matrix();
    if g.shape() != bm.shape() {
        return Err(Error::dims(
            "skew_lift",
            format!("{} x {}", bm.nrows(), bm.ncols()),
            format!("{} x {}", g.nrows(), g.ncols()),
        ));
    }
    Ok(g * bm.transpose() - bm * g.transpose())
}

/// The orthogonal factor `(I + tau/2 A)^{-1} (I - tau/2 A)` for skew `A`.
pub fn cayley_factor(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_skew(a)?;
    check_tau(tau)?;
    let p = a.nrows();
    let half = 0.5 * tau;
    let lhs = DMatrix::<f64>::identity(p, p) + a * half;
    let rhs = DMatrix::<f64>::identity(p, p) - a * half;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("I + tau/2 A reported singular for a skew-symmetric A".into()))
}

/// Moves `b` along the Cayley curve of the skew matrix `a` by step `tau`.
///
/// This is the direct `p x p` solve. [`cayley_step_low_rank`] gives the same
/// point from the gradient without forming `A`.
pub fn cayley_step(b: &StiefelPoint, a: &DMatrix<f64>, tau: f64) -> Result<StiefelPoint> {
    let p = b.ambient_dim();
    if a.shape() != (p, p) {
        return Err(Error::dims("cayley_step", format!("{p} x {p}"), format!("{} x {}", a.nrows(), a.ncols())));
    }
    check_skew(a)?;
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(b.clone());
    }
    let moved = direct_point(b.as_matrix(), a, tau)?;
    StiefelPoint::from_matrix(moved)
}

/// Cayley step for `A = G B^T - B G^T` through the Sherman-Morrison-Woodbury
/// identity, solving a `2d x 2d` system instead of a `p x p` one.
pub fn cayley_step_low_rank(b: &StiefelPoint, g: &DMatrix<f64>, tau: f64) -> Result<StiefelPoint> {
    if g.shape() != b.as_matrix().shape() {
        return Err(Error::dims(
            "cayley_step_low_rank",
            format!("{} x {}", b.ambient_dim(), b.structural_dim()),
            format!("{} x {}", g.nrows(), g.ncols()),
        ));
    }
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(b.clone());
    }
    let curve = CayleyCurve::new(b.as_matrix(), g, true);
    StiefelPoint::from_matrix(curve.point(tau)?)
}

fn direct_point(b: &DMatrix<f64>, a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let half = 0.5 * tau;
    let lhs = DMatrix::<f64>::identity(p, p) + a * half;
    let rhs = b - (a * b) * half;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("I + tau/2 A reported singular for a skew-symmetric A".into()))
}

fn check_skew(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::dims("skew matrix", "square", format!("{} x {}", a.nrows(), a.ncols())));
    }
    let asym = (a + a.transpose()).norm();
    if asym > 1e-10 * (1.0 + a.norm()) {
        return Err(Error::InvalidArgument(format!("matrix is not skew-symmetric (||A + A^T|| = {asym:.3e})")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be finite and nonnegative, got {tau}")));
    }
    Ok(())
}

/// Precomputed pieces of `tau -> B(tau)` for a fixed `B` and `G`.
pub(crate) struct CayleyCurve {
    b: DMatrix<f64>,
    path: CurvePath,
}

enum CurvePath {
    /// `B(tau) = B - tau U (I + tau/2 V^T U)^{-1} V^T B`, `U = [G, B]`, `V = [B, -G]`.
    LowRank {
        u: DMatrix<f64>,
        vu: DMatrix<f64>,
        vb: DMatrix<f64>,
    },
    Direct { a: DMatrix<f64> },
}

impl CayleyCurve {
    pub(crate) fn new(b: &DMatrix<f64>, g: &DMatrix<f64>, low_rank: bool) -> Self {
        let path = if low_rank {
            let (p, d) = b.shape();
            let mut u = DMatrix::zeros(p, 2 * d);
            u.columns_mut(0, d).copy_from(g);
            u.columns_mut(d, d).copy_from(b);
            let mut v = DMatrix::zeros(p, 2 * d);
            v.columns_mut(0, d).copy_from(b);
            v.columns_mut(d, d).copy_from(&(-g));
            let vt = v.transpose();
            CurvePath::LowRank {
                vu: &vt * &u,
                vb: &vt * b,
                u,
            }
        } else {
            CurvePath::Direct {
                a: g * b.transpose() - b * g.transpose(),
            }
        };
        Self { b: b.clone(), path }
    }

    pub(crate) fn point(&self, tau: f64) -> Result<DMatrix<f64>> {
        match &self.path {
            CurvePath::Direct { a } => direct_point(&self.b, a, tau),
            CurvePath::LowRank { u, vu, vb } => {
                let k = vu.nrows();
                let lhs = DMatrix::<f64>::identity(k, k) + vu * (0.5 * tau);
                let inner = lhs
                    .lu()
                    .solve(vb)
                    .ok_or_else(|| Error::Internal("reduced Cayley system is singular".into()))?;
                Ok(&self.b - (u * inner) * tau)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{feasibility_defect, random_orthogonal};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn lift_of_parallel_gradient_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(4, &mut rng);
        let b = StiefelPoint::new(q.clone()).unwrap();
        let a = skew_lift(&b, &q).unwrap();
        assert!(a.norm() <= 1e-14);
    }

    #[test]
    fn lift_hand_example() {
        let b = StiefelPoint::identity(2, 1).unwrap();
        let g = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let a = skew_lift(&b, &g).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    }

    #[test]
    fn lift_dimension_mismatch() {
        let b = StiefelPoint::identity(3, 1).unwrap();
        assert!(matches!(skew_lift(&b, &DMatrix::zeros(3, 2)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_step_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = StiefelPoint::random(5, 2, &mut rng).unwrap();
        let a = skew_lift(&b, &normal(&mut rng, 5, 2)).unwrap();
        assert_eq!(cayley_step(&b, &a, 0.0).unwrap(), b);
    }

    #[test]
    fn hand_rotation_example() {
        let b = StiefelPoint::identity(2, 1).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let moved = cayley_step(&b, &a, 2.0).unwrap();
        assert_abs_diff_eq!(moved.as_matrix(), &DMatrix::from_column_slice(2, 1, &[0.0, -1.0]), epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_skew_and_negative_step() {
        let b = StiefelPoint::identity(2, 1).unwrap();
        let sym = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(cayley_step(&b, &sym, 1.0).is_err());
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(cayley_step(&b, &a, -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn low_rank_matches_direct(seed in any::<u64>(), p in 2usize..12, tau in 0.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 1 + (seed as usize) % p;
            let b = StiefelPoint::random(p, d, &mut rng).unwrap();
            let g = normal(&mut rng, p, d);
            let a = skew_lift(&b, &g).unwrap();
            prop_assert!((&a + a.transpose()).norm() <= 1e-12);
            let direct = cayley_step(&b, &a, tau).unwrap();
            let low = cayley_step_low_rank(&b, &g, tau).unwrap();
            prop_assert!((direct.as_matrix() - low.as_matrix()).amax() <= 1e-9);
            prop_assert!(feasibility_defect(direct.as_matrix()) <= 1e-10);
        }

        #[test]
        fn cayley_factor_is_a_rotation(seed in any::<u64>(), p in 1usize..7, tau in 0.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = normal(&mut rng, p, p);
            let a = &m - m.transpose();
            let f = cayley_factor(&a, tau).unwrap();
            for s in f.singular_values().iter() {
                prop_assert!((s - 1.0).abs() <= 1e-10);
            }
        }
    }
}
