// Regression dimension reduction: SIR on a monotone single-index model and
// PHD on a quadratic one, with labelled loadings.
//
// ```bash
// cargo run --release --example regression_fit
// ```

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stiefel_dr::regression::{fit_reg, RegFitSpec, RegMethod, RegressionDataset};

fn simulate(n: usize, p: usize, seed: u64, link: impl Fn(f64) -> f64) -> stiefel_dr::Result<RegressionDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    // index along (1, 1, 0, ...) / sqrt(2)
    let y = (0..n)
        .map(|i| link((x[(i, 0)] + x[(i, 1)]) / 2f64.sqrt()) + 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let names = ["cement", "slag", "ash", "water", "plasticizer", "age"].iter().take(p).map(|s| s.to_string()).collect();
    RegressionDataset::new(x, y)?.with_names(names)
}

fn report(label: &str, data: &RegressionDataset, method: RegMethod) -> stiefel_dr::Result<f64> {
    let spec = RegFitSpec {
        method,
        ndr: 1,
        ..RegFitSpec::default()
    };
    let model = fit_reg(data, &spec)?;
    let b = model.original_scale_basis()?;
    let truth = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).normalize();
    let cos = b.as_matrix().column(0).dot(&truth).abs();
    println!("{label} ({method}): f = {:.3e}, {} iterations", model.fit.fval, model.fit.iterations);
    for (name, v) in model.names.iter().zip(b.as_matrix().column(0).iter()) {
        println!("  {name:>12} {v:>9.4}");
    }
    println!("  |cos| with the true index = {cos:.4}");
    Ok(cos)
}

pub fn run() -> stiefel_dr::Result<(f64, f64)> {
    let sir = report("monotone link", &simulate(400, 6, 7, |t| t + 0.3 * t.powi(3))?, RegMethod::Sir)?;
    let phd = report("quadratic link", &simulate(400, 6, 8, |t| t * t)?, RegMethod::Phd)?;
    Ok((sir, phd))
}

#[allow(dead_code)]
fn main() -> stiefel_dr::Result<()> {
    run().map(|_| ())
}
