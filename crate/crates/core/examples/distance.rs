// The four subspace comparisons on a few hand-built bases.
//
// ```bash
// cargo run --example distance
// ```

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stiefel_dr::manifold::{distance, random_orthogonal, DistanceMethod, Subspace};

pub fn run() -> stiefel_dr::Result<Vec<f64>> {
    let e1 = Subspace::from_matrix(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]))?;
    let e2 = Subspace::from_matrix(&DMatrix::from_column_slice(2, 1, &[0.0, 1.0]))?;
    let diag = Subspace::from_matrix(&DMatrix::from_column_slice(2, 1, &[1.0, 1.0]))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(200, 2, |_, _| StandardNormal.sample(&mut rng));
    let mut out = Vec::new();
    for (label, a, b) in [("e1 vs e1", &e1, &e1), ("e1 vs e2", &e1, &e2), ("e1 vs (1,1)", &e1, &diag)] {
        print!("{label:>12}:");
        for method in [DistanceMethod::Dist, DistanceMethod::Trace, DistanceMethod::Canonical, DistanceMethod::Sine] {
            let v = distance(a, b, method, Some(&x))?;
            print!("  {method} {v:.5}");
            out.push(v);
        }
        println!();
    }

    // a basis and a rotated copy span the same space
    let b = DMatrix::from_fn(6, 2, |_, _| StandardNormal.sample(&mut rng));
    let s = Subspace::from_matrix(&b)?;
    let rotated = Subspace::from_matrix(&(s.basis().as_matrix() * random_orthogonal(2, &mut rng)))?;
    println!("basis vs rotated basis, dist = {:.2e}", distance(&s, &rotated, DistanceMethod::Dist, None)?);
    Ok(out)
}

#[allow(dead_code)]
fn main() -> stiefel_dr::Result<()> {
    run().map(|_| ())
}
