//! Benchmark problems with known optima and fixed-budget timing runs.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::StiefelPoint;
use crate::solver::{ortho_optim_with_observer, CallbackResult, Objective, ObjectiveSpec, SolverControl};

/// `f(B) = tr(B^T X B D)` with symmetric `X` and diagonal `D`.
#[derive(Clone, Debug)]
pub struct Brockett {
    x: DMatrix<f64>,
    d: DVector<f64>,
}

impl Brockett {
    pub fn new(x: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if !x.is_square() {
            return Err(Error::dims("brockett", "a square X", format!("{} x {}", x.nrows(), x.ncols())));
        }
        if d.len() > x.nrows() || d.is_empty() {
            return Err(Error::dims("brockett", format!("1..={} diagonal entries", x.nrows()), d.len()));
        }
        if (&x - x.transpose()).amax() > 1e-12 * x.amax().max(1.0) {
            return Err(Error::InvalidArgument("brockett X must be symmetric".into()));
        }
        Ok(Self { x, d })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn diagonal(&self) -> &DVector<f64> {
        &self.d
    }

    /// The global minimum over the Stiefel manifold.
    ///
    /// The smallest eigenvalues of `X`, ascending, are paired with the
    /// entries of `D`, descending.
    pub fn oracle(&self) -> f64 {
        let mut eig: Vec<f64> = SymmetricEigen::new(self.x.clone()).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let mut d: Vec<f64> = self.d.iter().copied().collect();
        d.sort_by(|a, b| b.total_cmp(a));
        eig.iter().zip(&d).map(|(l, m)| l * m).sum()
    }

    fn eval(&self, b: &DMatrix<f64>) -> f64 {
        let xb = &self.x * b;
        (0..b.ncols()).map(|j| self.d[j] * b.column(j).dot(&xb.column(j))).sum()
    }

    /// `2 X B D`.
    fn grad(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = &self.x * b * 2.0;
        for (j, mut col) in g.column_iter_mut().enumerate() {
            col *= self.d[j];
        }
        g
    }
}

impl Objective for Brockett {
    fn value(&self, b: &DMatrix<f64>) -> CallbackResult<f64> {
        Ok(self.eval(b))
    }

    fn gradient(&self, b: &DMatrix<f64>) -> Option<CallbackResult<DMatrix<f64>>> {
        Some(Ok(self.grad(b)))
    }
}

/// A seeded Brockett instance with its starting point.
#[derive(Clone, Debug)]
pub struct BrockettProblem {
    pub objective: Brockett,
    pub oracle: f64,
    pub initial: StiefelPoint,
}

/// `X = M + M^T` with `M` standard normal `n x n`, `D = diag(p, ..., 1)`.
pub fn brockett(n: usize, p: usize, seed: u64) -> Result<BrockettProblem> {
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!("brockett needs 1 <= p <= n, got n = {n}, p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = &m + m.transpose();
    let d = DVector::from_fn(p, |j, _| (p - j) as f64);
    let objective = Brockett::new(x, d)?;
    let initial = StiefelPoint::random(n, p, &mut rng)?;
    Ok(BrockettProblem {
        oracle: objective.oracle(),
        objective,
        initial,
    })
}

/// `w -> ||X w||^2` for centered data, maximized by the first principal direction.
#[derive(Clone, Debug)]
pub struct PcaObjective {
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl PcaObjective {
    pub fn new(x: DMatrix<f64>) -> Self {
        let gram = x.transpose() * &x;
        Self { x, gram }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.x
    }
}

impl Objective for PcaObjective {
    fn value(&self, w: &DMatrix<f64>) -> CallbackResult<f64> {
        Ok((&self.x * w).norm_squared())
    }

    fn gradient(&self, w: &DMatrix<f64>) -> Option<CallbackResult<DMatrix<f64>>> {
        Some(Ok(&self.gram * w * 2.0))
    }
}

#[derive(Clone, Debug)]
pub struct PcaProblem {
    pub objective: PcaObjective,
    pub initial: StiefelPoint,
    /// Leading right singular vector of the centered data.
    pub leading: StiefelPoint,
}

/// Column-centered standard normal `n x p` data and a random unit start.
pub fn pca_problem(n: usize, p: usize, seed: u64) -> Result<PcaProblem> {
    if n < 2 || p == 0 {
        return Err(Error::InvalidArgument(format!("pca needs n >= 2 and p >= 1, got n = {n}, p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let initial = StiefelPoint::random(p, 1, &mut rng)?;
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Internal("svd did not return right singular vectors".into()))?;
    let top = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let leading = StiefelPoint::from_matrix(DMatrix::from_iterator(p, 1, v_t.row(top).iter().copied()))?;
    Ok(PcaProblem {
        objective: PcaObjective::new(x),
        initial,
        leading,
    })
}

/// One problem size and iteration budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub p: usize,
    pub iterations: usize,
}

/// The fixed-budget grid: `n` in {150, 500}, `p` in {5, 10, 20, 50}.
pub fn table_grid() -> Vec<BenchConfig> {
    let mut grid = Vec::new();
    for n in [150, 500] {
        for (p, iterations) in [(5, 250), (10, 500), (20, 750), (50, 1000)] {
            grid.push(BenchConfig { n, p, iterations });
        }
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub problem: String,
    pub n: usize,
    pub p: usize,
    /// Columns of `B` (the `p` of the Brockett cost).
    pub d: usize,
    pub repeat: usize,
    pub seed: u64,
    pub iterations: usize,
    /// Objective after each iteration, starting with the initial point.
    pub fval_trace: Vec<f64>,
    pub elapsed: f64,
    pub final_fval: f64,
    pub oracle: f64,
    /// `|f - oracle| / |oracle|`.
    pub relative_gap: f64,
    pub max_defect: f64,
    /// Accepted steps that ended above the search reference.
    pub non_descent_steps: usize,
}

/// Runs the Brockett problem `repeats` times with exactly `config.iterations`
/// single-threaded iterations each; repeat `r` uses seed `seed + r`.
pub fn run_benchmark(config: BenchConfig, repeats: usize, seed: u64) -> Result<Vec<BenchResult>> {
    let ctrl = SolverControl::fixed_budget(config.iterations);
    (0..repeats)
        .map(|r| {
            let run_seed = seed.wrapping_add(r as u64);
            let problem = brockett(config.n, config.p, run_seed)?;
            let spec = ObjectiveSpec::minimize(&problem.objective);
            let mut non_descent_steps = 0;
            let start = Instant::now();
            let fit = ortho_optim_with_observer(problem.initial.as_matrix().clone(), &spec, &ctrl, |rec| {
                if !rec.stalled && rec.internal_fval > rec.reference {
                    non_descent_steps += 1;
                }
            })?;
            let elapsed = start.elapsed().as_secs_f64();
            Ok(BenchResult {
                problem: "brockett".into(),
                n: config.n,
                p: config.n,
                d: config.p,
                repeat: r,
                seed: run_seed,
                iterations: fit.iterations,
                relative_gap: (fit.fval - problem.oracle).abs() / problem.oracle.abs(),
                final_fval: fit.fval,
                oracle: problem.oracle,
                fval_trace: fit.fval_trace,
                elapsed,
                max_defect: fit.max_defect,
                non_descent_steps,
            })
        })
        .collect()
}

/// `n,d,repeat,iteration,fval` rows, one per trace entry.
pub fn write_traces_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "d", "repeat", "iteration", "fval"])?;
    for r in results {
        for (k, f) in r.fval_trace.iter().enumerate() {
            w.write_record([r.n.to_string(), r.d.to_string(), r.repeat.to_string(), k.to_string(), format!("{f:.15e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per run; `elapsed` in seconds.
pub fn write_timing_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["problem", "n", "d", "repeat", "seed", "iterations", "elapsed", "final_fval", "oracle", "relative_gap"])?;
    for r in results {
        w.write_record([
            r.problem.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.repeat.to_string(),
            r.seed.to_string(),
            r.iterations.to_string(),
            format!("{:.6}", r.elapsed),
            format!("{:.15e}", r.final_fval),
            format!("{:.15e}", r.oracle),
            format!("{:.15e}", r.relative_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}
