// First principal component through the general solver, with closures as
// the objective and gradient, compared against an SVD.
//
// ```bash
// cargo run --release --example pca
// ```

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stiefel_dr::manifold::{distance, gram_schmidt, DistanceMethod, Subspace};
use stiefel_dr::solver::{ortho_optim, FnObjective, ObjectiveSpec, SolverControl};

pub fn run() -> stiefel_dr::Result<f64> {
    let (n, p) = (400, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let w0 = gram_schmidt(&DMatrix::from_fn(p, 1, |_, _| rng.sample::<f64, _>(StandardNormal)))?;

    let gram = x.transpose() * &x;
    let objective = FnObjective::new(|w: &DMatrix<f64>| (&x * w).norm_squared()).with_gradient(|w: &DMatrix<f64>| &gram * w * 2.0);
    let ctrl = SolverControl {
        ftol: 1e-12,
        gtol: 1e-8,
        maxitr: 2000,
        num_threads: 1,
        ..SolverControl::default()
    };
    let fit = ortho_optim(w0, &ObjectiveSpec::maximize(objective), &ctrl)?;

    let v_t = x.clone().svd(false, true).v_t.expect("right singular vectors requested");
    let top = DMatrix::from_iterator(p, 1, v_t.row(0).iter().copied());
    let dist = distance(&Subspace::new(fit.b.clone()), &Subspace::from_matrix(&top)?, DistanceMethod::Dist, None)?;

    println!("first rows of w:");
    for i in 0..6 {
        println!("  {:>12.8}", fit.b.as_matrix()[(i, 0)]);
    }
    println!("||Xw||^2 = {:.6} after {} iterations ({})", fit.fval, fit.iterations, fit.reason);
    println!("dist to the SVD direction = {dist:.3e}");
    Ok(dist)
}

#[allow(dead_code)]
fn main() -> stiefel_dr::Result<()> {
    run().map(|_| ())
}
