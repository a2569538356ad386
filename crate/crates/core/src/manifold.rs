//! Points on the Stiefel manifold, orthonormalization and subspace distances.
//!
//! A [`StiefelPoint`] is a `p x d` matrix with orthonormal columns. Its column
//! span is the object of interest for dimension reduction, so the distances
//! in this module compare spans through their projection matrices and are
//! unchanged by right-multiplying either basis with a `d x d` orthogonal
//! matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible `||B^T B - I||_F` for a feasible point.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Residual column norm below which Gram-Schmidt reports rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

/// A `p x d` real matrix with orthonormal columns, `p >= d >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    values: DMatrix<f64>,
}

impl StiefelPoint {
    /// Wraps `values` after checking shape, finiteness and orthonormality.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (p, d) = values.shape();
        if d == 0 || p < d {
            return Err(Error::dims("StiefelPoint", "p >= d >= 1", format!("{p} x {d}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let defect = feasibility_defect(&values);
        if defect > FEASIBILITY_TOL {
            return Err(Error::Infeasible { defect });
        }
        Ok(Self { values })
    }

    /// Returns `values` as-is when feasible, otherwise its Gram-Schmidt orthonormalization.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let (p, d) = values.shape();
        if d == 0 || p < d {
            return Err(Error::dims("StiefelPoint", "p >= d >= 1", format!("{p} x {d}")));
        }
        if values.iter().all(|v| v.is_finite()) && feasibility_defect(&values) <= FEASIBILITY_TOL {
            return Ok(Self { values });
        }
        gram_schmidt(&values)
    }

    /// The first `d` columns of the `p x p` identity.
    pub fn identity(p: usize, d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(p, d))
    }

    /// A uniformly random point, orthonormalized from a standard normal draw.
    pub fn random<R: Rng + ?Sized>(p: usize, d: usize, rng: &mut R) -> Result<Self> {
        let m = DMatrix::from_fn(p, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        gram_schmidt(&m)
    }

    pub(crate) fn from_matrix_unchecked(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn ambient_dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn structural_dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    /// `||B^T B - I||_F`.
    pub fn defect(&self) -> f64 {
        feasibility_defect(&self.values)
    }

    /// Right-multiplies by a `d x d` orthogonal matrix. The span is unchanged.
    pub fn rotate(&self, q: &DMatrix<f64>) -> Result<Self> {
        let d = self.structural_dim();
        if q.shape() != (d, d) {
            return Err(Error::dims("rotate", format!("{d} x {d}"), format!("{} x {}", q.nrows(), q.ncols())));
        }
        Self::new(&self.values * q)
    }
}

impl AsRef<DMatrix<f64>> for StiefelPoint {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// `||M^T M - I||_F`.
pub fn feasibility_defect(m: &DMatrix<f64>) -> f64 {
    let mut gram = m.transpose() * m;
    for i in 0..gram.nrows() {
        gram[(i, i)] -= 1.0;
    }
    gram.norm()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass per column.
///
/// Fails when a column's norm after projection drops below [`RANK_TOL`].
pub fn gram_schmidt(m: &DMatrix<f64>) -> Result<StiefelPoint> {
    let (p, d) = m.shape();
    if d == 0 || p < d {
        return Err(Error::dims("gram_schmidt", "p >= d >= 1", format!("{p} x {d}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let mut q = m.clone();
    for j in 0..d {
        for _pass in 0..2 {
            for k in 0..j {
                let r = q.column(k).dot(&q.column(j));
                let qk = q.column(k).clone_owned();
                q.column_mut(j).axpy(-r, &qk, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if norm < RANK_TOL {
            return Err(Error::RankDeficient { column: j, norm });
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(StiefelPoint::from_matrix_unchecked(q))
}

/// A random `d x d` orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        if let Ok(q) = StiefelPoint::random(d, d, rng) {
            return q.into_matrix();
        }
    }
}

/// The column span of a basis, with its projection matrix.
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: StiefelPoint,
    projection: DMatrix<f64>,
}

impl Subspace {
    pub fn new(basis: StiefelPoint) -> Self {
        let b = basis.as_matrix();
        // B (B^T B)^{-1} B^T with B^T B = I
        let projection = b * b.transpose();
        Self { basis, projection }
    }

    /// Span of an arbitrary full-column-rank matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::new(StiefelPoint::from_matrix(m.clone())?))
    }

    pub fn basis(&self) -> &StiefelPoint {
        &self.basis
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.ambient_dim()
    }

    pub fn dim(&self) -> usize {
        self.basis.structural_dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMethod {
    /// Frobenius norm of the difference of projection matrices.
    Dist,
    /// `tr(P1 P2) / d`.
    Trace,
    /// Mean canonical correlation between `X B1` and `X B2`.
    Canonical,
    /// `||sin Theta||_F` from `P1 (I - P2)`.
    Sine,
}

impl FromStr for DistanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dist" => Ok(Self::Dist),
            "trace" => Ok(Self::Trace),
            "canonical" => Ok(Self::Canonical),
            "sine" => Ok(Self::Sine),
            other => Err(Error::InvalidArgument(format!("unknown distance method `{other}`"))),
        }
    }
}

impl fmt::Display for DistanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dist => "dist",
            Self::Trace => "trace",
            Self::Canonical => "canonical",
            Self::Sine => "sine",
        })
    }
}

/// Distance (or similarity, for `Trace` and `Canonical`) between two spans.
///
/// `x` is the `n x p` design matrix and is only used by `Canonical`.
pub fn distance(
    s1: &Subspace,
    s2: &Subspace,
    method: DistanceMethod,
    x: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let p = s1.ambient_dim();
    if s2.ambient_dim() != p {
        return Err(Error::dims("distance", format!("p = {p}"), format!("p = {}", s2.ambient_dim())));
    }
    let (p1, p2) = (s1.projection(), s2.projection());
    match method {
        DistanceMethod::Dist => Ok((p1 - p2).norm()),
        DistanceMethod::Trace => {
            if s1.dim() != s2.dim() {
                return Err(Error::dims("trace distance", format!("d = {}", s1.dim()), format!("d = {}", s2.dim())));
            }
            // tr(P1 P2) as the elementwise product sum, both symmetric
            let tr = p1.component_mul(p2).sum();
            Ok((tr / s1.dim() as f64).clamp(0.0, 1.0))
        }
        DistanceMethod::Sine => {
            let complement = DMatrix::<f64>::identity(p, p) - p2;
            // sum of squared singular values equals the squared Frobenius norm
            Ok((p1 * complement).norm())
        }
        DistanceMethod::Canonical => {
            let x = x.ok_or(Error::MissingArgument("x is required for the canonical metric"))?;
            if x.ncols() != p {
                return Err(Error::dims("canonical distance", format!("x with {p} columns"), format!("{} columns", x.ncols())));
            }
            canonical_correlation(x, s1.basis().as_matrix(), s2.basis().as_matrix())
        }
    }
}

fn canonical_correlation(x: &DMatrix<f64>, b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<f64> {
    let centered = |m: DMatrix<f64>| {
        let mut m = m;
        for mut col in m.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        m
    };
    let u = centered(x * b1);
    let v = centered(x * b2);
    if u.nrows() < u.ncols() + 1 || v.nrows() < v.ncols() + 1 {
        return Err(Error::InvalidArgument("too few rows in x for canonical correlation".into()));
    }
    let qu = gram_schmidt(&u)?;
    let qv = gram_schmidt(&v)?;
    let cross = qu.as_matrix().transpose() * qv.as_matrix();
    let sv = cross.singular_values();
    let k = sv.len();
    let mean = sv.iter().map(|s| s.clamp(0.0, 1.0)).sum::<f64>() / k as f64;
    Ok(mean.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn span(m: DMatrix<f64>) -> Subspace {
        Subspace::from_matrix(&m).unwrap()
    }

    #[test]
    fn gram_schmidt_keeps_orthonormal_input() {
        let m = DMatrix::<f64>::identity(5, 3);
        assert_eq!(gram_schmidt(&m).unwrap().into_matrix(), m);
    }

    #[test]
    fn gram_schmidt_removes_column_scaling() {
        let m = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let b = gram_schmidt(&m).unwrap();
        assert_eq!(b.as_matrix(), &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn gram_schmidt_hand_example() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let b = gram_schmidt(&m).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expected = DMatrix::from_row_slice(3, 2, &[r, r, r, -r, 0.0, 0.0]);
        assert_abs_diff_eq!(b.as_matrix(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn gram_schmidt_reports_offending_column() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 1.0]);
        match gram_schmidt(&m) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn stiefel_point_rejects_bad_shapes() {
        assert!(StiefelPoint::new(DMatrix::identity(2, 3)).is_err());
        assert!(StiefelPoint::new(DMatrix::from_element(2, 1, 1.0)).is_err());
        assert!(StiefelPoint::from_matrix(DMatrix::from_element(2, 1, 1.0)).is_ok());
    }

    #[test]
    fn identical_spans() {
        let e1 = span(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(distance(&e1, &e1, DistanceMethod::Dist, None).unwrap(), 0.0);
        assert_abs_diff_eq!(distance(&e1, &e1, DistanceMethod::Trace, None).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(distance(&e1, &e1, DistanceMethod::Sine, None).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn orthogonal_axes_are_sqrt2_apart() {
        let e1 = span(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        let e2 = span(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        assert_abs_diff_eq!(distance(&e1, &e2, DistanceMethod::Dist, None).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(distance(&e1, &e2, DistanceMethod::Trace, None).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(distance(&e1, &e2, DistanceMethod::Sine, None).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn distance_errors() {
        let a = span(DMatrix::identity(3, 1));
        let b = span(DMatrix::identity(4, 1));
        assert!(matches!(distance(&a, &b, DistanceMethod::Dist, None), Err(Error::Dimension { .. })));
        assert!(matches!(distance(&a, &a, DistanceMethod::Canonical, None), Err(Error::MissingArgument(_))));
        let c = span(DMatrix::identity(3, 2));
        assert!(distance(&a, &c, DistanceMethod::Trace, None).is_err());
    }

    #[test]
    fn canonical_of_same_span_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(60, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = Subspace::new(StiefelPoint::random(4, 2, &mut rng).unwrap());
        let c = distance(&s, &s, DistanceMethod::Canonical, Some(&x)).unwrap();
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metrics_are_symmetric_and_basis_free(seed in any::<u64>(), p in 2usize..7, dsel in 0usize..6) {
            let d = 1 + dsel % (p - 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b1 = StiefelPoint::random(p, d, &mut rng).unwrap();
            let b2 = StiefelPoint::random(p, d, &mut rng).unwrap();
            let x = DMatrix::from_fn(40, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = random_orthogonal(d, &mut rng);
            let (s1, s2) = (Subspace::new(b1.clone()), Subspace::new(b2.clone()));
            let s1r = Subspace::new(b1.rotate(&q).unwrap());
            for m in [DistanceMethod::Dist, DistanceMethod::Trace, DistanceMethod::Sine, DistanceMethod::Canonical] {
                let a = distance(&s1, &s2, m, Some(&x)).unwrap();
                let b = distance(&s2, &s1, m, Some(&x)).unwrap();
                let r = distance(&s1r, &s2, m, Some(&x)).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-9, "{m} not symmetric: {a} vs {b}");
                prop_assert!((a - r).abs() <= 1e-9, "{m} depends on basis: {a} vs {r}");
                if matches!(m, DistanceMethod::Trace | DistanceMethod::Canonical) {
                    prop_assert!((0.0..=1.0).contains(&a));
                }
            }
            prop_assert!(distance(&s1, &s1r, DistanceMethod::Dist, None).unwrap() <= 1e-9);
            let defect = b1.defect();
            prop_assert!(defect <= FEASIBILITY_TOL);
        }

        #[test]
        fn projection_is_idempotent(seed in any::<u64>(), p in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = Subspace::new(StiefelPoint::random(p, 1 + (seed as usize) % p, &mut rng).unwrap());
            let pm = s.projection();
            prop_assert!((pm * pm - pm).norm() <= 1e-10);
        }
    }
}
