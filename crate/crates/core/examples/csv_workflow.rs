// From a CSV file to labelled loadings and plot-ready projections, the same
// path the command line takes.
//
// ```bash
// cargo run --release --example csv_workflow
// ```

use std::fmt::Write as _;
use std::fs;

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stiefel_dr::io::{emit_results, ingest_csv, read_result_json, Dataset, OutcomeSpec, OutputFormat, Report};
use stiefel_dr::regression::{fit_reg, RegFitSpec, RegMethod};

pub fn run() -> stiefel_dr::Result<usize> {
    let dir = std::env::temp_dir().join(format!("stiefel-dr-csv-workflow-{}", std::process::id()));
    fs::create_dir_all(&dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = DMatrix::from_fn(300, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut text = String::from("cement,water,age,sand,strength\n");
    for row in x.row_iter() {
        let y = (row[0] - row[2]).tanh() * 3.0 + 0.1 * rng.sample::<f64, _>(StandardNormal);
        let _ = writeln!(text, "{},{},{},{},{y}", row[0], row[1], row[2], row[3]);
    }
    let input = dir.join("concrete_like.csv");
    fs::write(&input, text)?;

    let Dataset::Regression(data) = ingest_csv(&input, &OutcomeSpec::Regression { outcome: "strength".into() })? else {
        unreachable!("a regression outcome was requested")
    };
    let spec = RegFitSpec {
        method: RegMethod::Sir,
        ndr: 2,
        ..RegFitSpec::default()
    };
    let model = fit_reg(&data, &spec)?;
    let report = Report::for_model(&model, data.x(), data.y(), "strength")?;
    let out = dir.join("fit");
    let files = emit_results(&report, OutputFormat::Text, &out)?;
    files.iter().chain(&emit_results(&report, OutputFormat::Json, &out)?).for_each(|f| println!("wrote {}", f.display()));

    print!("{}", fs::read_to_string(out.join("result.txt"))?.lines().take(6).fold(String::new(), |s, l| s + l + "\n"));
    let back = read_result_json(&out.join("result.json"))?;
    println!("result.json holds {} rows of B; projected.csv has {} data rows", back.b.len(), fs::read_to_string(out.join("projected.csv"))?.lines().count() - 1);
    fs::remove_dir_all(&dir)?;
    Ok(back.b.len())
}

#[allow(dead_code)]
fn main() -> stiefel_dr::Result<()> {
    run().map(|_| ())
}
