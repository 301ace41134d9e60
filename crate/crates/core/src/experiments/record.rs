use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const SAMPLES_HEADER: &str = "experiment,n,alpha,t,sample,seed,E1,E2,x1,x2,R_value,trace_sq1,trace_sq2";

/// One per-sample output row; fields that an experiment does not produce
/// are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub experiment: String,
    pub n: usize,
    pub alpha: f64,
    pub t: f64,
    pub sample: usize,
    pub seed: u64,
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
    pub x1: f64,
    pub x2: f64,
    #[serde(rename = "R_value")]
    pub r_value: f64,
    pub trace_sq1: f64,
    pub trace_sq2: f64,
}

impl SampleRow {
    pub fn empty(experiment: &str, n: usize, alpha: f64, sample: usize, seed: u64) -> Self {
        SampleRow {
            experiment: experiment.to_string(),
            n,
            alpha,
            t: f64::NAN,
            sample,
            seed,
            e1: f64::NAN,
            e2: f64::NAN,
            x1: f64::NAN,
            x2: f64::NAN,
            r_value: f64::NAN,
            trace_sq1: f64::NAN,
            trace_sq2: f64::NAN,
        }
    }

    fn csv_line(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.n,
            self.alpha,
            self.t,
            self.sample,
            self.seed,
            self.e1,
            self.e2,
            self.x1,
            self.x2,
            self.r_value,
            self.trace_sq1,
            self.trace_sq2
        );
    }
}

pub fn samples_csv(rows: &[SampleRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 120);
    out.push_str(SAMPLES_HEADER);
    out.push('\n');
    for r in rows {
        r.csv_line(&mut out);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub rows: Vec<SampleRow>,
    /// Deterministic aggregates; written verbatim to `summary.json`.
    pub summary: Value,
    /// Additional CSV tables keyed by file name.
    pub tables: Vec<(String, String)>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl ExperimentRecord {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)? + "\n")
    }

    /// Writes `config.json`, `samples.csv` (or `.json`), `summary.json`,
    /// `run.json` and any extra tables into `dir`.
    pub fn write(&self, dir: &Path, format: SampleFormat) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), self.config.to_json()? + "\n")?;
        match format {
            SampleFormat::Csv => fs::write(dir.join("samples.csv"), samples_csv(&self.rows))?,
            SampleFormat::Json => fs::write(dir.join("samples.json"), serde_json::to_string(&self.rows)?)?,
        }
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        for (name, body) in &self.tables {
            fs::write(dir.join(name), body)?;
        }
        let run = serde_json::json!({
            "schema": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "wall_clock_seconds": self.wall_clock_seconds,
            "version": self.version,
            "threads": rayon::current_num_threads(),
        });
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run)? + "\n")?;
        Ok(dir.to_path_buf())
    }
}

/// A finished run directory whose config hash has been checked.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub summary: Value,
}

/// Loads a run directory, refusing it when the summary's recorded config
/// hash does not match `config.json`.
pub fn load_report(dir: &Path) -> Result<RunReport> {
    let config = ExperimentConfig::load(&dir.join("config.json"))?;
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
    let recorded = summary
        .get("config_hash")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidArgument("summary.json has no config_hash".into()))?
        .to_string();
    let actual = config.content_hash();
    if recorded != actual {
        return Err(Error::HashMismatch { recorded, actual });
    }
    if summary.get("schema").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
        return Err(Error::InvalidArgument("summary.json schema mismatch".into()));
    }
    Ok(RunReport { config, config_hash: actual, summary })
}
