// The Brockett cost `tr(B^T X B D)` with an analytic gradient, run for a
// fixed number of iterations and checked against the eigenvalue optimum.
//
// ```bash
// cargo run --release --example brockett -- 150 5 250
// ```

use stiefel_dr::bench::{brockett, run_benchmark, BenchConfig};

pub fn run(n: usize, p: usize, iterations: usize) -> stiefel_dr::Result<f64> {
    let problem = brockett(n, p, 1)?;
    println!("n = {n}, p = {p}, oracle = {:.10}", problem.oracle);

    let result = run_benchmark(BenchConfig { n, p, iterations }, 1, 1)?.remove(0);
    for k in [0, 10, 50, 100, iterations / 2, iterations] {
        if let Some(f) = result.fval_trace.get(k) {
            println!("  iter {k:>5}: f = {f:.10}  log gap = {:.3}", (f - result.oracle).abs().max(1e-300).log10());
        }
    }
    println!("relative gap {:.3e} in {:.4} s, max ||B^T B - I|| = {:.2e}", result.relative_gap, result.elapsed, result.max_defect);
    Ok(result.relative_gap)
}

#[allow(dead_code)]
fn main() -> stiefel_dr::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let get = |i: usize, d: usize| args.get(i).copied().unwrap_or(d);
    run(get(0, 150), get(1, 5), get(2, 250)).map(|_| ())
}
