//! Report CSVs, the run manifest, and atomic file output.

use std::fs;
use std::path::Path;

use rpme::analysis::EstimateReport;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
struct ReportRow<'a> {
    name: &'a str,
    measured: f64,
    bound: Option<f64>,
    passed: bool,
    std_error: Option<f64>,
    dim: usize,
    cells: usize,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
}

/// One CSV row per report, with a header.
pub fn reports_csv(reports: &[EstimateReport]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(ReportRow {
            name: &r.name,
            measured: r.measured,
            bound: r.bound,
            passed: r.passed,
            std_error: r.std_error,
            dim: r.context.dim,
            cells: r.context.cells,
            dt: r.context.dt,
            n_steps: r.context.n_steps,
            n_paths: r.context.n_paths,
            seed: r.context.seed,
        })
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}

/// Files produced by a run, kept in memory until the run has finished.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, rel: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run-level facts echoed into the manifest.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub subcommand: &'static str,
    pub config: std::collections::BTreeMap<String, String>,
    pub dt: f64,
    pub n_steps: usize,
    pub r2: f64,
    pub reports: Vec<EstimateReport>,
    pub wall_time_s: f64,
}

/// Manifest JSON; object keys are sorted, so the layout is stable.
pub fn manifest(summary: &RunSummary, digests: &[(String, String)]) -> Value {
    let files: Map<String, Value> = digests
        .iter()
        .map(|(k, v)| (k.clone(), Value::String(v.clone())))
        .collect();
    let reports: Vec<Value> = summary
        .reports
        .iter()
        .map(|r| json!({ "name": r.name, "passed": r.passed }))
        .collect();
    json!({
        "subcommand": summary.subcommand,
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": summary.config,
        "dt": summary.dt,
        "n_steps": summary.n_steps,
        "r2": summary.r2,
        "reports": reports,
        "all_passed": summary.reports.iter().all(|r| r.passed),
        "wall_time_s": summary.wall_time_s,
        "files": files,
    })
}

/// Writes every output file, then the manifest with their digests.
pub fn commit(out_dir: &Path, outputs: &Outputs, summary: &RunSummary) -> Result<(), CliError> {
    let mut digests = Vec::with_capacity(outputs.files.len());
    for (rel, bytes) in &outputs.files {
        write_atomic(&out_dir.join(rel), bytes)?;
        digests.push((rel.clone(), sha256_hex(bytes)));
    }
    let text = serde_json::to_string_pretty(&manifest(summary, &digests))
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    write_atomic(
        &out_dir.join("manifest.json"),
        format!("{text}\n").as_bytes(),
    )
}
