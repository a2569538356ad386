// Survival dimension reduction on simulated censored data.
//
// The simulated failure time is `exp(-2.5 + X b1 + 0.5 (X b2) e)`, so the
// second direction only changes the spread of the log time. Expect the
// first direction to be recovered and the second to be poorly determined.
//
// ```bash
// cargo run --release --example survival_fit -- 350 6 1
// ```

use stiefel_dr::manifold::{distance, DistanceMethod, Subspace};
use stiefel_dr::sim::gen_survival_sim;
use stiefel_dr::survival::{fit_surv, initial_b_surv, SurvFitSpec};

pub fn run(n: usize, p: usize, seed: u64) -> stiefel_dr::Result<f64> {
    let sim = gen_survival_sim(n, p, seed)?;
    let data = &sim.data;
    println!("n = {n}, p = {p}, failures = {}", data.failures());

    let spec = SurvFitSpec::default();
    let model = fit_surv(data, &spec)?;
    let truth = Subspace::new(sim.fail_edr.clone());
    let fitted = Subspace::new(model.original_scale_basis()?);
    let start = Subspace::new(initial_b_surv(data, spec.ndr, model.kernel.slice_fraction)?.b);

    println!("bandwidth {:.4}, slice fraction {:.4}", model.kernel.bw, model.kernel.slice_fraction);
    println!("f: {:.4e} -> {:.4e} in {} iterations ({})", model.fit.fval_trace[0], model.fit.fval, model.fit.iterations, model.fit.reason);
    println!("estimated B (raw scale):");
    for (name, row) in model.names.iter().zip(fitted.basis().as_matrix().row_iter()) {
        println!("  {name:>4} {:>10.5} {:>10.5}", row[0], row[1]);
    }
    let dist = distance(&fitted, &truth, DistanceMethod::Dist, None)?;
    println!("dist to failure directions: initial {:.4}, fitted {dist:.4}", distance(&start, &truth, DistanceMethod::Dist, None)?);
    let b1 = sim.fail_edr.as_matrix().column(0);
    println!("share of b1 inside the fitted span: {:.4}", (fitted.basis().as_matrix().transpose() * b1).norm_squared());
    Ok(dist)
}

#[allow(dead_code)]
fn main() -> stiefel_dr::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let get = |i: usize, d: u64| args.get(i).copied().unwrap_or(d);
    run(get(0, 350) as usize, get(1, 6) as usize, get(2, 1)).map(|_| ())
}
