use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stiefel-dr")).args(args).current_dir(dir).env("STIEFEL_DR_THREADS", "1").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate_reg(dir: &Path) {
    assert!(cli(&["simulate", "--design", "reg", "--n", "80", "--p", "3", "--seed", "2", "--out", "reg.csv"], dir).status.success());
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let help = stdout(&cli(&["--help"], dir.path()));
    for sub in ["fit-surv", "fit-reg", "optim-demo", "distance", "benchmark", "simulate"] {
        assert!(help.contains(sub), "{sub} missing from\n{help}");
    }
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate_reg(d);
    assert_eq!(cli(&["fit-reg", "--outcome", "y"], d).status.code(), Some(2), "usage error");
    assert_eq!(cli(&["fit-reg", "--data", "reg.csv", "--outcome", "nope", "--out", "o"], d).status.code(), Some(2), "schema error");
    fs::write(d.join("bad.csv"), "a,b,y\n1,2,3\n4,x,6\n").unwrap();
    let bad = cli(&["fit-reg", "--data", "bad.csv", "--outcome", "y", "--out", "o"], d);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("row 2, column `b`"));
    assert_eq!(cli(&["fit-reg", "--data", "reg.csv", "--outcome", "y", "--ndr", "9", "--out", "o"], d).status.code(), Some(3), "ndr > p");
    assert_eq!(cli(&["fit-reg", "--data", "reg.csv", "--outcome", "y", "--method", "lasso", "--out", "o"], d).status.code(), Some(3));
    assert_eq!(cli(&["fit-reg", "--data", "missing.csv", "--outcome", "y", "--out", "o"], d).status.code(), Some(5));
    assert_eq!(cli(&["fit-reg", "--data", "reg.csv", "--outcome", "y", "--ndr", "1", "--out", "o"], d).status.code(), Some(0));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate_reg(d);
    fs::write(d.join("run.cfg"), "# regression defaults\nmethod = phd\nndr = 2\nformat = csv\n").unwrap();
    assert!(cli(&["fit-reg", "--data", "reg.csv", "--outcome", "y", "--config", "run.cfg", "--ndr", "1", "--out", "o"], d).status.success());
    let summary = fs::read_to_string(d.join("o/summary.csv")).unwrap();
    assert!(summary.contains("method,phd"), "{summary}");
    let b = fs::read_to_string(d.join("o/b.csv")).unwrap();
    assert_eq!(b.lines().next(), Some("name,b1"));
    assert_eq!(b.lines().count(), 4);
}

#[test]
fn bad_thread_variable_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate_reg(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_stiefel-dr"))
        .args(["fit-reg", "--data", "reg.csv", "--outcome", "y", "--out", "o"])
        .current_dir(dir.path())
        .env("STIEFEL_DR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn distance_prints_fifteen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.csv"), "c1\n1\n0\n").unwrap();
    fs::write(d.join("b.csv"), "c1\n0\n1\n").unwrap();
    assert_eq!(stdout(&cli(&["distance", "--b1", "a.csv", "--b2", "b.csv"], d)), "1.41421356237310e0\n");
    assert_eq!(stdout(&cli(&["distance", "--b1", "a.csv", "--b2", "a.csv", "--method", "trace"], d)), "1.00000000000000e0\n");
    assert_eq!(cli(&["distance", "--b1", "a.csv", "--b2", "b.csv", "--method", "canonical"], d).status.code(), Some(3));
}

#[test]
fn survival_fit_writes_labelled_results_and_projection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(cli(&["simulate", "--design", "surv", "--n", "120", "--p", "6", "--seed", "3", "--out", "s.csv", "--truth", "t.csv"], d).status.success());
    let o = cli(&["fit-surv", "--data", "s.csv", "--time", "time", "--censor", "status", "--ndr", "2", "--maxitr", "30", "--out", "fit"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("fit/result.json")).unwrap()).unwrap();
    assert_eq!(json["names"][0], "x1");
    assert_eq!(json["b"].as_array().unwrap().len(), 6);
    assert!(json["iterations"].as_u64().unwrap() <= 30);
    let projected = fs::read_to_string(d.join("fit/projected.csv")).unwrap();
    assert_eq!(projected.lines().next(), Some("dir1,dir2,time"));
    assert_eq!(projected.lines().count(), 121);
    let dist = stdout(&cli(&["distance", "--b1", "fit/result.json", "--b2", "t.csv"], d));
    assert!(dist.trim().parse::<f64>().unwrap() <= 2f64.sqrt() * 2.0);
}

#[test]
fn benchmark_writes_traces_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = cli(&["benchmark", "--problem", "brockett", "--n", "30", "--p", "3", "--iters", "40", "--repeats", "2", "--out", "bench"], d);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(d.join("bench/traces.csv")).unwrap().lines().count(), 1 + 2 * 41);
    assert_eq!(fs::read_to_string(d.join("bench/timing.csv")).unwrap().lines().count(), 3);
    assert_eq!(cli(&["benchmark", "--problem", "rosenbrock", "--out", "b2"], d).status.code(), Some(3));
}
