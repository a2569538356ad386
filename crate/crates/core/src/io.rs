//! CSV ingestion, result files and the flat key-value config format.
//!
//! Numbers are written with 15 significant digits. Wall-clock times are kept
//! out of result files so that equal inputs give byte-identical outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DrFit;
use crate::error::{Error, Result};
use crate::manifold::StiefelPoint;
use crate::regression::RegressionDataset;
use crate::solver::{FitResult, StopReason};
use crate::survival::SurvivalDataset;

/// `x` rounded to 15 significant digits.
pub fn sig15(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.14e}").parse().unwrap_or(x)
    } else {
        x
    }
}

/// `x` printed with 15 significant digits.
pub fn fmt15(x: f64) -> String {
    format!("{x:.14e}")
}

/// A numeric table read from a CSV file with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Row-major values.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found; available: {}", self.headers.join(", "))))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// The listed columns as an `n x k` matrix.
    pub fn matrix(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), cols.len(), |i, j| self.rows[i][cols[j]])
    }
}

fn parse_cell(text: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_owned(),
        message: format!("`{text}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_owned(),
            message: format!("`{text}` is not finite"),
        });
    }
    Ok(v)
}

/// Reads an all-numeric CSV. Rows are numbered from 1 after the header.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Schema(format!("{} has no header row", path.display())));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .zip(&headers)
            .map(|(cell, name)| parse_cell(cell, i + 1, name))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

/// Which columns hold the outcome; every other column is a covariate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutcomeSpec {
    Survival { time: String, censor: String },
    Regression { outcome: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Survival(SurvivalDataset),
    Regression(RegressionDataset),
}

/// Loads a dataset, keeping covariate headers as names.
///
/// The censoring column holds 1 for an observed failure and 0 for a censored time.
pub fn ingest_csv(path: &Path, outcome: &OutcomeSpec) -> Result<Dataset> {
    let table = read_table(path)?;
    let outcome_cols: Vec<usize> = match outcome {
        OutcomeSpec::Survival { time, censor } => vec![table.column_index(time)?, table.column_index(censor)?],
        OutcomeSpec::Regression { outcome } => vec![table.column_index(outcome)?],
    };
    let features: Vec<usize> = (0..table.headers.len()).filter(|j| !outcome_cols.contains(j)).collect();
    if features.is_empty() {
        return Err(Error::Schema("no covariate columns left after removing the outcome".into()));
    }
    let names = features.iter().map(|&j| table.headers[j].clone()).collect();
    let x = table.matrix(&features);
    Ok(match outcome {
        OutcomeSpec::Survival { .. } => {
            let y = table.column(outcome_cols[0]);
            let censor = table.column(outcome_cols[1]);
            Dataset::Survival(SurvivalDataset::from_indicators(x, y, &censor)?.with_names(names)?)
        }
        OutcomeSpec::Regression { .. } => Dataset::Regression(RegressionDataset::new(x, table.column(outcome_cols[0]))?.with_names(names)?),
    })
}

/// Reads a matrix from CSV. A header row is required; a leading column of
/// non-numeric labels (as written by [`emit_results`]) is dropped.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::Schema(format!("{} has no data rows", path.display())));
    }
    let labelled = headers.first().is_some_and(|h| h == "name") || records.iter().any(|r| r.get(0).is_some_and(|c| c.trim().parse::<f64>().is_err()));
    let skip = usize::from(labelled);
    let ncols = headers.len() - skip;
    let mut values = Vec::with_capacity(records.len() * ncols);
    for (i, record) in records.iter().enumerate() {
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: i + 1,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (cell, name) in record.iter().zip(&headers).skip(skip) {
            values.push(parse_cell(cell, i + 1, name)?);
        }
    }
    Ok(DMatrix::from_row_slice(records.len(), ncols, &values))
}

/// Writes a matrix with a header `c1, c2, ...`.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=m.ncols()).map(|j| format!("c{j}")))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| fmt15(v)))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Text,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "text" => Ok(Self::Text),
            other => Err(Error::InvalidArgument(format!("unknown output format `{other}` (expected json, csv or text)"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Text => "text",
        })
    }
}

/// Reduced covariates with the outcome, one row per subject.
#[derive(Clone, Debug)]
pub struct Projection {
    pub values: DMatrix<f64>,
    pub outcome: Vec<f64>,
    pub outcome_name: String,
}

/// Everything written for one solver run.
#[derive(Clone, Debug)]
pub struct Report<'a> {
    pub fit: &'a FitResult,
    /// Row labels for `B`.
    pub names: Vec<String>,
    /// `B` in raw covariate units, for standardized fits.
    pub raw_basis: Option<StiefelPoint>,
    pub metadata: BTreeMap<String, String>,
    pub projection: Option<Projection>,
}

impl<'a> Report<'a> {
    /// A report for a plain solver run with rows labelled `x1, x2, ...`.
    pub fn plain(fit: &'a FitResult) -> Self {
        Self {
            fit,
            names: (1..=fit.b.ambient_dim()).map(|j| format!("x{j}")).collect(),
            raw_basis: None,
            metadata: BTreeMap::new(),
            projection: None,
        }
    }

    /// A report for a dimension-reduction fit on covariates `x` with outcome `y`.
    pub fn for_model(model: &'a DrFit, x: &DMatrix<f64>, y: &[f64], outcome_name: &str) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        metadata.insert("bw".to_owned(), fmt15(model.kernel.bw));
        metadata.insert("slice_fraction".to_owned(), fmt15(model.kernel.slice_fraction));
        metadata.insert("initial_fallback".to_owned(), model.initial_fallback.to_string());
        metadata.insert("degenerate_windows".to_owned(), model.degenerate_windows.to_string());
        Ok(Self {
            fit: &model.fit,
            names: model.names.clone(),
            raw_basis: Some(model.original_scale_basis()?),
            metadata,
            projection: Some(Projection {
                values: model.project(x)?,
                outcome: y.to_vec(),
                outcome_name: outcome_name.to_owned(),
            }),
        })
    }
}

/// The JSON result schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub names: Vec<String>,
    /// `B` by rows, one per covariate.
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_raw: Option<Vec<Vec<f64>>>,
    pub fval: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    pub fval_trace: Vec<f64>,
    pub reorthonormalizations: usize,
    pub max_defect: f64,
    pub evaluations: usize,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ResultFile {
    pub fn basis(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.b)
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|&v| sig15(v)).collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

fn result_file(report: &Report<'_>) -> ResultFile {
    let fit = report.fit;
    ResultFile {
        names: report.names.clone(),
        b: matrix_rows(fit.b.as_matrix()),
        b_raw: report.raw_basis.as_ref().map(|b| matrix_rows(b.as_matrix())),
        fval: sig15(fit.fval),
        iterations: fit.iterations,
        converged: fit.converged,
        reason: fit.reason,
        fval_trace: fit.fval_trace.iter().map(|&v| sig15(v)).collect(),
        reorthonormalizations: fit.reorthonormalizations,
        max_defect: sig15(fit.max_defect),
        evaluations: fit.evaluations,
        metadata: report.metadata.clone(),
    }
}

pub fn read_result_json(path: &Path) -> Result<ResultFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_basis_csv(path: &Path, names: &[String], b: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["name".to_owned()];
    header.extend((1..=b.ncols()).map(|j| format!("b{j}")));
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(b.row_iter()) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|&v| fmt15(v)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn summary_pairs(report: &Report<'_>) -> Vec<(String, String)> {
    let fit = report.fit;
    let mut pairs = vec![
        ("fval".to_owned(), fmt15(fit.fval)),
        ("iterations".to_owned(), fit.iterations.to_string()),
        ("converged".to_owned(), fit.converged.to_string()),
        ("reason".to_owned(), fit.reason.to_string()),
        ("reorthonormalizations".to_owned(), fit.reorthonormalizations.to_string()),
        ("max_defect".to_owned(), fmt15(fit.max_defect)),
        ("evaluations".to_owned(), fit.evaluations.to_string()),
    ];
    pairs.extend(report.metadata.iter().map(|(k, v)| (k.clone(), v.clone())));
    pairs
}

fn text_report(report: &Report<'_>) -> String {
    let b = report.fit.b.as_matrix();
    let width = report.names.iter().map(String::len).max().unwrap_or(0).max(4);
    let mut out = String::from("B\n");
    out.push_str(&format!("{:width$}", ""));
    for j in 1..=b.ncols() {
        out.push_str(&format!(" {:>22}", format!("b{j}")));
    }
    out.push('\n');
    for (name, row) in report.names.iter().zip(b.row_iter()) {
        out.push_str(&format!("{name:width$}"));
        for &v in row.iter() {
            out.push_str(&format!(" {:>22}", fmt15(v)));
        }
        out.push('\n');
    }
    out.push('\n');
    for (k, v) in summary_pairs(report) {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out.push_str("\ntrace\n");
    for (k, v) in report.fit.fval_trace.iter().enumerate() {
        out.push_str(&format!("{k} {}\n", fmt15(*v)));
    }
    out
}

/// Writes result files into `dir` (created if missing) and returns their paths.
///
/// - json: `result.json`
/// - csv: `b.csv`, `b_raw.csv` (standardized fits), `trace.csv`, `summary.csv`
/// - text: `result.txt`
///
/// A fitted model also gets `projected.csv` with `n` rows and `ndr + 1` columns.
pub fn emit_results(report: &Report<'_>, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Json => {
            let path = dir.join("result.json");
            let mut text = serde_json::to_string_pretty(&result_file(report))?;
            text.push('\n');
            fs::write(&path, text)?;
            written.push(path);
        }
        OutputFormat::Csv => {
            let path = dir.join("b.csv");
            write_basis_csv(&path, &report.names, report.fit.b.as_matrix())?;
            written.push(path);
            if let Some(raw) = &report.raw_basis {
                let path = dir.join("b_raw.csv");
                write_basis_csv(&path, &report.names, raw.as_matrix())?;
                written.push(path);
            }
            let path = dir.join("trace.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["iteration", "fval"])?;
            for (k, v) in report.fit.fval_trace.iter().enumerate() {
                w.write_record([k.to_string(), fmt15(*v)])?;
            }
            w.flush()?;
            written.push(path);
            let path = dir.join("summary.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["key", "value"])?;
            for (k, v) in summary_pairs(report) {
                w.write_record([k, v])?;
            }
            w.flush()?;
            written.push(path);
        }
        OutputFormat::Text => {
            let path = dir.join("result.txt");
            fs::write(&path, text_report(report))?;
            written.push(path);
        }
    }
    if let Some(proj) = &report.projection {
        let path = dir.join("projected.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Vec<String> = (1..=proj.values.ncols()).map(|j| format!("dir{j}")).collect();
        header.push(proj.outcome_name.clone());
        w.write_record(&header)?;
        for (row, y) in proj.values.row_iter().zip(&proj.outcome) {
            let mut record: Vec<String> = row.iter().map(|&v| fmt15(v)).collect();
            record.push(fmt15(*y));
            w.write_record(&record)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            column: String::new(),
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            return Err(Error::Parse {
                row: i + 1,
                column: String::new(),
                message: "empty key".into(),
            });
        }
        map.insert(key, value.trim().to_owned());
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config(&fs::read_to_string(path)?)
}
