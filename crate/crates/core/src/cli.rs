//! The `stiefel-dr` command line.
//!
//! Settings resolve as flags, then the `--config` file, then defaults. The
//! thread count falls back to `STIEFEL_DR_THREADS` before the core count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::bench::{brockett, pca_problem, run_benchmark, table_grid, write_timing_csv, write_traces_csv, BenchConfig};
use crate::error::{Error, Result};
use crate::io::{emit_results, fmt15, ingest_csv, read_config, read_matrix_csv, read_result_json, write_matrix_csv, Dataset, OutcomeSpec, OutputFormat, Report};
use crate::manifold::{distance, DistanceMethod, Subspace};
use crate::regression::{fit_reg, RegFitSpec, RegMethod};
use crate::sim::{gen_regression_sim, gen_survival_sim};
use crate::solver::{ortho_optim, ObjectiveSpec, SolverControl};
use crate::survival::{fit_surv, SurvFitSpec, SurvMethod};

pub const THREADS_ENV: &str = "STIEFEL_DR_THREADS";

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Csv(e) if e.is_io_error() => 5,
        Error::Parse { .. } | Error::Schema(_) | Error::Csv(_) | Error::Json(_) => 2,
        Error::Dimension { .. }
        | Error::RankDeficient { .. }
        | Error::Infeasible { .. }
        | Error::MissingArgument(_)
        | Error::InvalidArgument(_)
        | Error::InvalidDataset { .. }
        | Error::UnimplementedMethod { .. } => 3,
        Error::NonFiniteInitial | Error::NonFiniteObjective { .. } | Error::Objective(_) | Error::Callback { .. } | Error::Internal(_) => 4,
        Error::Io(_) => 5,
    }
}

#[derive(Debug, Parser)]
#[command(name = "stiefel-dr", version, about = "Orthogonality-constrained optimization and semiparametric dimension reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a survival dimension-reduction model.
    FitSurv(FitSurvArgs),
    /// Fit a regression dimension-reduction model.
    FitReg(FitRegArgs),
    /// Solve a built-in problem with the general solver.
    OptimDemo(OptimDemoArgs),
    /// Distance between two bases, each a matrix CSV or a `result.json`.
    Distance(DistanceArgs),
    /// Fixed-budget Brockett timing runs.
    Benchmark(BenchmarkArgs),
    /// Write a simulated dataset.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ndr: Option<usize>,
    #[arg(long)]
    pub bw: Option<f64>,
    #[arg(long)]
    pub maxitr: Option<usize>,
    #[arg(long)]
    pub ftol: Option<f64>,
    #[arg(long)]
    pub gtol: Option<f64>,
    #[arg(long)]
    pub btol: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Starting basis (CSV, standardized covariate scale).
    #[arg(long)]
    pub b_initial: Option<PathBuf>,
    /// Flat `key = value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// json, csv or text.
    #[arg(long)]
    pub format: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitSurvArgs {
    /// Observed-time column.
    #[arg(long)]
    pub time: String,
    /// Failure indicator column (1 = failure, 0 = censored).
    #[arg(long)]
    pub censor: String,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub slice_fraction: Option<f64>,
    #[command(flatten)]
    pub common: FitArgs,
}

#[derive(Debug, Args)]
pub struct FitRegArgs {
    #[arg(long)]
    pub outcome: String,
    /// sir or phd.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub slices: Option<usize>,
    #[command(flatten)]
    pub common: FitArgs,
}

#[derive(Debug, Args)]
pub struct OptimDemoArgs {
    /// brockett or pca.
    #[arg(long, default_value = "brockett")]
    pub problem: String,
    #[arg(long, default_value_t = 150)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub maxitr: Option<usize>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[arg(long)]
    pub b1: PathBuf,
    #[arg(long)]
    pub b2: PathBuf,
    /// dist, trace, canonical or sine.
    #[arg(long, default_value = "dist")]
    pub method: String,
    /// Design matrix CSV, needed by `canonical`.
    #[arg(long)]
    pub x: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value = "brockett")]
    pub problem: String,
    #[arg(long, default_value_t = 150)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 250)]
    pub iters: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Run every row of the timing grid instead of one configuration.
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// surv or reg.
    #[arg(long)]
    pub design: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the true basis here.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

struct Settings {
    config: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        Ok(Self { config })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.config
            .get(key)
            .map(|v| v.parse().map_err(|_| Error::InvalidArgument(format!("config key `{key}` has an invalid value `{v}`"))))
            .transpose()
    }
}

fn default_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k),
            _ => Err(Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

struct Resolved {
    ndr: Option<usize>,
    bw: Option<f64>,
    b_initial: Option<DMatrix<f64>>,
    control: SolverControl,
    format: OutputFormat,
}

fn resolve(args: &FitArgs, settings: &Settings) -> Result<Resolved> {
    let d = SolverControl::default();
    let control = SolverControl {
        maxitr: settings.get(args.maxitr, "maxitr")?.unwrap_or(d.maxitr),
        ftol: settings.get(args.ftol, "ftol")?.unwrap_or(d.ftol),
        gtol: settings.get(args.gtol, "gtol")?.unwrap_or(d.gtol),
        btol: settings.get(args.btol, "btol")?.unwrap_or(d.btol),
        epsilon: settings.get(args.epsilon, "epsilon")?.unwrap_or(d.epsilon),
        tau_init: settings.get(None, "tau_init")?.unwrap_or(d.tau_init),
        rho: settings.get(None, "rho")?.unwrap_or(d.rho),
        eta: settings.get(None, "eta")?.unwrap_or(d.eta),
        nonmonotone_window: settings.get(None, "nonmonotone_window")?.unwrap_or(d.nonmonotone_window),
        num_threads: match settings.get(args.threads, "threads")? {
            Some(k) => k,
            None => default_threads()?,
        },
        ..d
    };
    control.validate()?;
    let b_path: Option<PathBuf> = settings.get(args.b_initial.clone(), "b_initial")?;
    let ndr = settings.get(args.ndr, "ndr")?;
    if ndr == Some(0) {
        return Err(Error::InvalidArgument("ndr must be at least 1".into()));
    }
    Ok(Resolved {
        ndr,
        bw: settings.get(args.bw, "bw")?,
        b_initial: b_path.as_deref().map(read_matrix_csv).transpose()?,
        control,
        format: settings.get(args.format.as_deref().map(str::to_owned), "format")?.as_deref().map(OutputFormat::from_str).transpose()?.unwrap_or_default(),
    })
}

fn written(paths: &[PathBuf]) -> String {
    paths.iter().fold(String::new(), |mut s, p| {
        let _ = writeln!(s, "wrote {}", p.display());
        s
    })
}

fn fit_surv_cmd(args: &FitSurvArgs) -> Result<String> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let r = resolve(&args.common, &settings)?;
    let outcome = OutcomeSpec::Survival {
        time: args.time.clone(),
        censor: args.censor.clone(),
    };
    let Dataset::Survival(data) = ingest_csv(&args.common.data, &outcome)? else {
        return Err(Error::Internal("expected a survival dataset".into()));
    };
    let defaults = SurvFitSpec::default();
    let spec = SurvFitSpec {
        method: settings.get(args.method.clone(), "method")?.as_deref().map(SurvMethod::from_str).transpose()?.unwrap_or(defaults.method),
        ndr: r.ndr.unwrap_or(defaults.ndr),
        b_initial: r.b_initial,
        bw: r.bw,
        slice_fraction: settings.get(args.slice_fraction, "slice_fraction")?,
        control: r.control,
    };
    let model = fit_surv(&data, &spec)?;
    let mut report = Report::for_model(&model, data.x(), data.y(), &args.time)?;
    report.metadata.insert("method".into(), spec.method.to_string());
    report.metadata.insert("n".into(), data.n().to_string());
    report.metadata.insert("failures".into(), data.failures().to_string());
    let paths = emit_results(&report, r.format, &args.common.out)?;
    Ok(format!("fval = {}\niterations = {}\n{}", fmt15(model.fit.fval), model.fit.iterations, written(&paths)))
}

fn fit_reg_cmd(args: &FitRegArgs) -> Result<String> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let r = resolve(&args.common, &settings)?;
    let Dataset::Regression(data) = ingest_csv(&args.common.data, &OutcomeSpec::Regression { outcome: args.outcome.clone() })? else {
        return Err(Error::Internal("expected a regression dataset".into()));
    };
    let defaults = RegFitSpec::default();
    let spec = RegFitSpec {
        method: settings.get(args.method.clone(), "method")?.as_deref().map(RegMethod::from_str).transpose()?.unwrap_or(defaults.method),
        ndr: r.ndr.unwrap_or(defaults.ndr),
        b_initial: r.b_initial,
        bw: r.bw,
        slices: settings.get(args.slices, "slices")?.unwrap_or(defaults.slices),
        control: r.control,
    };
    let model = fit_reg(&data, &spec)?;
    let mut report = Report::for_model(&model, data.x(), data.y(), &args.outcome)?;
    report.metadata.insert("method".into(), spec.method.to_string());
    report.metadata.insert("n".into(), data.n().to_string());
    let paths = emit_results(&report, r.format, &args.common.out)?;
    Ok(format!("fval = {}\niterations = {}\n{}", fmt15(model.fit.fval), model.fit.iterations, written(&paths)))
}

fn optim_demo_cmd(args: &OptimDemoArgs) -> Result<String> {
    let format = args.format.as_deref().map(OutputFormat::from_str).transpose()?.unwrap_or_default();
    let mut out = String::new();
    let paths = match args.problem.as_str() {
        "brockett" => {
            let problem = brockett(args.n, args.p, args.seed)?;
            let ctrl = SolverControl::fixed_budget(args.maxitr.unwrap_or(250));
            let fit = ortho_optim(problem.initial.as_matrix().clone(), &ObjectiveSpec::minimize(&problem.objective), &ctrl)?;
            let mut report = Report::plain(&fit);
            report.metadata.insert("oracle".into(), fmt15(problem.oracle));
            let _ = writeln!(out, "fval = {}\noracle = {}", fmt15(fit.fval), fmt15(problem.oracle));
            emit_results(&report, format, &args.out)?
        }
        "pca" => {
            let problem = pca_problem(args.n, args.p, args.seed)?;
            let ctrl = SolverControl {
                ftol: 1e-12,
                gtol: 1e-8,
                maxitr: args.maxitr.unwrap_or(2000),
                num_threads: 1,
                ..SolverControl::default()
            };
            let fit = ortho_optim(problem.initial.as_matrix().clone(), &ObjectiveSpec::maximize(&problem.objective), &ctrl)?;
            let dist = distance(&Subspace::new(fit.b.clone()), &Subspace::new(problem.leading), DistanceMethod::Dist, None)?;
            let mut report = Report::plain(&fit);
            report.metadata.insert("dist_to_svd".into(), fmt15(dist));
            let _ = writeln!(out, "fval = {}\ndist_to_svd = {}", fmt15(fit.fval), fmt15(dist));
            emit_results(&report, format, &args.out)?
        }
        other => return Err(Error::InvalidArgument(format!("unknown problem `{other}` (expected brockett or pca)"))),
    };
    out.push_str(&written(&paths));
    Ok(out)
}

/// A basis from a matrix CSV or from the `b` field of a `result.json`.
fn load_basis(path: &Path) -> Result<DMatrix<f64>> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(read_result_json(path)?.basis())
    } else {
        read_matrix_csv(path)
    }
}

fn distance_cmd(args: &DistanceArgs) -> Result<String> {
    let method = DistanceMethod::from_str(&args.method)?;
    let s1 = Subspace::from_matrix(&load_basis(&args.b1)?)?;
    let s2 = Subspace::from_matrix(&load_basis(&args.b2)?)?;
    let x = args.x.as_deref().map(read_matrix_csv).transpose()?;
    let v = distance(&s1, &s2, method, x.as_ref())?;
    Ok(format!("{}\n", fmt15(v)))
}

fn benchmark_cmd(args: &BenchmarkArgs) -> Result<String> {
    if args.problem != "brockett" {
        return Err(Error::InvalidArgument(format!("unknown benchmark problem `{}` (expected brockett)", args.problem)));
    }
    if args.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let configs = if args.grid {
        table_grid()
    } else {
        vec![BenchConfig {
            n: args.n,
            p: args.p,
            iterations: args.iters,
        }]
    };
    let mut results = Vec::new();
    let mut out = String::new();
    for config in configs {
        let runs = run_benchmark(config, args.repeats, args.seed)?;
        let mean = runs.iter().map(|r| r.elapsed).sum::<f64>() / runs.len() as f64;
        let gap = runs.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
        let _ = writeln!(out, "n = {} p = {} iterations = {}: mean time {:.4} s, worst relative gap {}", config.n, config.p, config.iterations, mean, fmt15(gap));
        results.extend(runs);
    }
    fs::create_dir_all(&args.out)?;
    write_traces_csv(&results, fs::File::create(args.out.join("traces.csv"))?)?;
    write_timing_csv(&results, fs::File::create(args.out.join("timing.csv"))?)?;
    fs::write(args.out.join("results.json"), serde_json::to_string_pretty(&results)? + "\n")?;
    let _ = writeln!(out, "wrote {}", args.out.display());
    Ok(out)
}

fn simulate_cmd(args: &SimulateArgs) -> Result<String> {
    let mut w = csv::Writer::from_path(&args.out)?;
    let mut header: Vec<String> = (1..=args.p).map(|j| format!("x{j}")).collect();
    let truth = match args.design.as_str() {
        "surv" => {
            let sim = gen_survival_sim(args.n, args.p, args.seed)?;
            header.extend(["time".to_owned(), "status".to_owned()]);
            w.write_record(&header)?;
            let data = &sim.data;
            for i in 0..data.n() {
                let mut rec: Vec<String> = data.x().row(i).iter().map(|&v| fmt15(v)).collect();
                rec.push(fmt15(data.y()[i]));
                rec.push(u8::from(data.delta()[i]).to_string());
                w.write_record(&rec)?;
            }
            sim.fail_edr.into_matrix()
        }
        "reg" => {
            let sim = gen_regression_sim(args.n, args.p, args.seed)?;
            header.push("y".to_owned());
            w.write_record(&header)?;
            let data = &sim.data;
            for i in 0..data.n() {
                let mut rec: Vec<String> = data.x().row(i).iter().map(|&v| fmt15(v)).collect();
                rec.push(fmt15(data.y()[i]));
                w.write_record(&rec)?;
            }
            sim.true_b.into_matrix()
        }
        other => return Err(Error::InvalidArgument(format!("unknown design `{other}` (expected surv or reg)"))),
    };
    w.flush()?;
    let mut out = format!("wrote {}\n", args.out.display());
    if let Some(path) = &args.truth {
        write_matrix_csv(path, &truth)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(out)
}

/// Runs a parsed command and returns what it prints on success.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::FitSurv(a) => fit_surv_cmd(a),
        Command::FitReg(a) => fit_reg_cmd(a),
        Command::OptimDemo(a) => optim_demo_cmd(a),
        Command::Distance(a) => distance_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
    }
}
