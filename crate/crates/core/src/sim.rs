//! Seeded simulation designs for the survival and regression models.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{gram_schmidt, StiefelPoint};
use crate::regression::RegressionDataset;
use crate::survival::SurvivalDataset;

/// A simulated survival dataset with its true directions.
#[derive(Clone, Debug)]
pub struct SurvivalSim {
    pub data: SurvivalDataset,
    /// Two orthonormal failure directions.
    pub fail_edr: StiefelPoint,
    pub censor_edr: StiefelPoint,
}

#[derive(Clone, Debug)]
pub struct RegressionSim {
    pub data: RegressionDataset,
    pub true_b: StiefelPoint,
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    // filled row by row so a prefix of rows does not depend on n
    let values: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(n, p, &values)
}

/// How the second failure direction enters the failure time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SurvivalDesign {
    /// `T = exp(-2.5 + X b1 + 0.5 (X b2) e_T)`: `b2` only scales the noise.
    #[default]
    ScaleNoise,
    /// `T = exp(-2.5 + X b1 + 0.5 X b2 + 0.5 e_T)`: both directions shift the location.
    LocationShift,
}

/// Two failure directions and one censoring direction:
///
/// ```text
/// T = exp(-2.5 + X b1 + 0.5 (X b2) e_T),   C = exp(-0.5 + X g + e_C),
/// b1 = (1, 1, 0, ...), b2 = (0, 0, 1, -1, 0, ...), g = (0, 1, 0, 1, 1, 1, 0, ...)
/// ```
///
/// with `X`, `e_T`, `e_C` standard normal, `Y = min(T, C)` and `delta = 1{T < C}`.
///
/// Since `e_T` is symmetric, `T` depends on `X b2` only through `|X b2|`,
/// which first-moment estimating equations cannot see.
pub fn gen_survival_sim(n: usize, p: usize, seed: u64) -> Result<SurvivalSim> {
    gen_survival_sim_with(n, p, seed, SurvivalDesign::ScaleNoise)
}

pub fn gen_survival_sim_with(n: usize, p: usize, seed: u64, design: SurvivalDesign) -> Result<SurvivalSim> {
    if p < 6 {
        return Err(Error::InvalidArgument(format!("the survival design needs p >= 6, got {p}")));
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!("the survival design needs n >= 4, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, p);
    let mut b1 = DVector::zeros(p);
    b1[0] = 1.0;
    b1[1] = 1.0;
    let mut b2 = DVector::zeros(p);
    b2[2] = 1.0;
    b2[3] = -1.0;
    let mut g = DVector::zeros(p);
    for k in [1, 3, 4, 5] {
        g[k] = 1.0;
    }
    let (f1, f2, fc) = (&x * &b1, &x * &b2, &x * &g);
    let mut y = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for i in 0..n {
        let et: f64 = rng.sample(StandardNormal);
        let ec: f64 = rng.sample(StandardNormal);
        let t = match design {
            SurvivalDesign::ScaleNoise => (-2.5 + f1[i] + 0.5 * f2[i] * et).exp(),
            SurvivalDesign::LocationShift => (-2.5 + f1[i] + 0.5 * f2[i] + 0.5 * et).exp(),
        };
        let c = (-0.5 + fc[i] + ec).exp();
        y.push(t.min(c));
        delta.push(t < c);
    }
    let mut fail = DMatrix::zeros(p, 2);
    fail.set_column(0, &b1);
    fail.set_column(1, &b2);
    Ok(SurvivalSim {
        data: SurvivalDataset::new(x, y, delta)?,
        fail_edr: gram_schmidt(&fail)?,
        censor_edr: gram_schmidt(&DMatrix::from_column_slice(p, 1, g.as_slice()))?,
    })
}

/// `y = -1 + X_1 + e` with `X ~ N(0, I_p)` and `e ~ N(0, 1)`; the true basis is `e_1`.
pub fn gen_regression_sim(n: usize, p: usize, seed: u64) -> Result<RegressionSim> {
    if p == 0 || n < 2 {
        return Err(Error::InvalidArgument(format!("the regression design needs p >= 1 and n >= 2, got n = {n}, p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, p);
    let y = (0..n).map(|i| -1.0 + x[(i, 0)] + rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(RegressionSim {
        data: RegressionDataset::new(x, y)?,
        true_b: StiefelPoint::identity(p, 1)?,
    })
}
