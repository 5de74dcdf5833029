//! Run reports: CSV outputs plus a JSON sidecar with the effective config,
//! seed provenance, the git description of the source tree and every warning.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master_seed: u64,
    /// Sub-stream tags used by the run.
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: String,
    pub command: String,
    pub config: Value,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub seeds: SeedProvenance,
    pub git_describe: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

/// `git describe --always --dirty` of the working directory, or `unknown`.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Collects outputs and warnings for one command; all files go through it.
pub struct RunWriter {
    dir: PathBuf,
    command: String,
    started: Instant,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl RunWriter {
    pub fn new(dir: &Path, command: &str) -> Result<RunWriter> {
        fs::create_dir_all(dir)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            command: command.into(),
            started: Instant::now(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` in the output directory with `fill`.
    pub fn write_with(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf)?;
        self.outputs.push(name.into());
        Ok(path)
    }

    /// CSV with a header row; floats use the shortest round-trip form.
    pub fn write_rows(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        self.write_with(name, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }

    pub fn warn_all<I: IntoIterator<Item = String>>(&mut self, msgs: I) {
        for m in msgs {
            self.warn(m);
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Writes `<command>.json` and returns the report.
    pub fn finish(self, config: Value, seeds: SeedProvenance, summary: Value) -> Result<RunReport> {
        let report = RunReport {
            report_version: REPORT_VERSION.into(),
            command: self.command.clone(),
            config,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            seeds,
            git_describe: git_describe(),
            warnings: self.warnings,
            summary,
        };
        fs::write(self.dir.join(format!("{}.json", self.command)), serde_json::to_string_pretty(&report)?)?;
        Ok(report)
    }
}

/// Shortest round-trip text for a float.
pub fn fmt(x: f64) -> String {
    x.to_string()
}
