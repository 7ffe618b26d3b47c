//! File layout of the output directory and helpers to read and write it.
//!
//! ```text
//! OUT/<experiment>/experiment.json   ingest
//! OUT/<experiment>/packets.jsonl     ingest
//! OUT/<experiment>/gt.jsonl          ingest
//! OUT/<experiment>/labeled.jsonl     label
//! OUT/<experiment>/unlabeled.csv     label
//! OUT/<experiment>/estimates.csv     estimate
//! OUT/<experiment>/report.json       evaluate
//! OUT/<experiment>/cdf.csv           evaluate
//! OUT/unlabeled.csv                  label
//! OUT/evaluation.csv                 evaluate
//! OUT/table2.csv                     report
//! OUT/range/                         range fit / range eval
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Context, Result};

pub const EXPERIMENT: &str = "experiment.json";
pub const PACKETS: &str = "packets.jsonl";
pub const GT: &str = "gt.jsonl";
pub const LABELED: &str = "labeled.jsonl";
pub const UNLABELED: &str = "unlabeled.csv";
pub const ESTIMATES: &str = "estimates.csv";
pub const REPORT: &str = "report.json";
pub const CDF: &str = "cdf.csv";
pub const PHASES: &str = "phases";
pub const UNLABELED_SUMMARY: &str = "unlabeled.csv";
pub const EVALUATION: &str = "evaluation.csv";
pub const TABLE2: &str = "table2.csv";
pub const RANGE: &str = "range";

/// Written by `ingest`, read by later stages for grouping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInfo {
    pub name: String,
    pub height_mm: Option<f64>,
    pub obstacles: Option<bool>,
    pub scenario: Option<String>,
    pub signal: PathBuf,
    pub gt: PathBuf,
    pub chunks: usize,
    pub packets: usize,
    pub incomplete: usize,
    pub gt_records: usize,
}

pub fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path).at(path)?))
}

pub fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().at(path)
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::data("Io", e).at(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| json_error(&e, None).at(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::data("Io", e).at(path))?;
    w.write_all(b"\n").at(path)?;
    finish(w, path)
}

fn json_error(e: &serde_json::Error, line: Option<usize>) -> CliError {
    CliError::data(
        "MalformedJson",
        format!(
            "line {}, column {}: {e}",
            line.unwrap_or_else(|| e.line()),
            e.column()
        ),
    )
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).at(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| json_error(&e, Some(n + 1)).at(path))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CliError::data("Io", e).at(path))?;
        w.write_all(b"\n").at(path)?;
    }
    finish(w, path)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).at(path)?;
    r.deserialize().collect::<std::result::Result<_, _>>().at(path)
}

pub fn write_csv<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for item in items {
        w.serialize(item).at(path)?;
    }
    w.flush().at(path)
}

/// Experiment directories under `out`, sorted by name, optionally restricted
/// to `only`. Unknown names in `only` are an error.
pub fn experiments(out: &Path, only: &[String]) -> Result<Vec<ExperimentInfo>> {
    let mut found = Vec::new();
    if out.is_dir() {
        for entry in fs::read_dir(out).at(out)? {
            let path = entry.at(out)?.path().join(EXPERIMENT);
            if path.is_file() {
                found.push(read_json::<ExperimentInfo>(&path)?);
            }
        }
    }
    found.sort_by(|a, b| a.name.cmp(&b.name));
    if !only.is_empty() {
        if let Some(missing) = only.iter().find(|n| !found.iter().any(|e| &e.name == *n)) {
            return Err(CliError::data(
                "UnknownExperiment",
                format!("no ingested experiment named '{missing}'"),
            )
            .at(out));
        }
        found.retain(|e| only.contains(&e.name));
    }
    if found.is_empty() {
        return Err(CliError::data("NoExperiments", "no ingested experiments; run `ingest` first").at(out));
    }
    Ok(found)
}
