//! Result rows, CSV serialization, and the run-metadata sidecar.

use super::config::{ExperimentConfig, Family, MethodName};
use super::HarnessError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// One aggregated matched-pair comparison: a method against SAA for a fixed
/// (problem, distribution, sample size) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementRecord {
    pub family: Family,
    pub problem_id: u32,
    pub distribution_id: u32,
    pub method: MethodName,
    pub n: usize,
    /// Replication pairs that survived exclusion and back the statistics.
    pub k: usize,
    pub mean_improvement: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_cost_saa: f64,
    pub mean_cost_method: f64,
    /// Replications dropped for this method because estimation failed.
    pub excluded: usize,
}

pub const CSV_HEADER: &str =
    "family,problem_id,distribution_id,method,n,k,mean_improvement,ci_low,ci_high,mean_cost_saa,mean_cost_method,excluded";

/// Renders records in their given order. The float format is Rust's shortest
/// round-trip representation, so identical runs emit identical bytes.
pub fn render_csv(records: &[ImprovementRecord]) -> Result<String, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.family.as_str(),
            r.problem_id,
            r.distribution_id,
            r.method.as_str(),
            r.n,
            r.k,
            r.mean_improvement,
            r.ci_low,
            r.ci_high,
            r.mean_cost_saa,
            r.mean_cost_method,
            r.excluded,
        ));
    }
    Ok(out)
}

pub fn emit_csv(records: &[ImprovementRecord], path: &Path) -> Result<(), HarnessError> {
    let text = render_csv(records)?;
    write_file(path, text.as_bytes())
}

/// Sidecar describing a finished run. `generated_unix` is the only field
/// outside the determinism contract.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub master_seed: u64,
    pub config_hash: String,
    pub library_version: String,
    pub workers: usize,
    pub replications: usize,
    pub ridge_count: u64,
    pub excluded_total: u64,
    pub generated_unix: u64,
}

impl RunMeta {
    pub fn new(cfg: &ExperimentConfig, ridge_count: u64, excluded_total: u64) -> Self {
        Self {
            master_seed: cfg.master_seed,
            config_hash: config_hash(cfg),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            workers: cfg.workers,
            replications: cfg.replications,
            ridge_count,
            excluded_total,
            generated_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// SHA-256 of the canonical TOML rendering of the resolved config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.canonical_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn emit_meta(meta: &RunMeta, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    write_file(path, text.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}
