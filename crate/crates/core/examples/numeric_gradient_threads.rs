// Finite-difference gradients of the survival objective on 1 and 4
// worker threads: the values agree exactly, only the time differs.
//
// ```bash
// cargo run --release --example numeric_gradient_threads
// ```

use std::time::Instant;

use stiefel_dr::kernel::KernelConfig;
use stiefel_dr::manifold::StiefelPoint;
use stiefel_dr::sim::gen_survival_sim;
use stiefel_dr::solver::numeric_gradient;
use stiefel_dr::survival::SurvivalEquation;

pub fn run(n: usize) -> stiefel_dr::Result<f64> {
    let sim = gen_survival_sim(n, 6, 2)?;
    let equation = SurvivalEquation::from_dataset(&sim.data, KernelConfig::silverman(2, n))?;
    let b = StiefelPoint::identity(6, 2)?;

    let mut grads = Vec::new();
    for threads in [1, 4] {
        numeric_gradient(b.as_matrix(), &equation, 1e-6, threads)?;
        let start = Instant::now();
        let g = numeric_gradient(b.as_matrix(), &equation, 1e-6, threads)?;
        println!("{threads} thread(s): {:.4} s", start.elapsed().as_secs_f64());
        grads.push(g);
    }
    let diff = (&grads[0] - &grads[1]).amax();
    println!("max |g1 - g4| = {diff:e}");
    println!("available cores: {}", std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    Ok(diff)
}

#[allow(dead_code)]
fn main() -> stiefel_dr::Result<()> {
    run(350).map(|_| ())
}
