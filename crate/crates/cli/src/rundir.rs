//! Run directories: every output goes through [`RunDir::write`], which hashes
//! it, and [`RunDir::finish`] writes `manifest.json` listing all of them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedEntry {
    pub label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub wall_clock_seconds: f64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run_id: String,
    pub subcommand: String,
    pub config: Value,
    pub master_seed: u64,
    pub seeds: Vec<SeedEntry>,
    pub outputs: Vec<OutputEntry>,
    pub metrics: Metrics,
    pub summary: Value,
    pub passed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub struct RunDir {
    root: PathBuf,
    outputs: Vec<OutputEntry>,
    started: Instant,
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.outputs.retain(|o| o.file != name);
        self.outputs.push(OutputEntry {
            file: name.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::module("json", e))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn outputs(&self) -> &[OutputEntry] {
        &self.outputs
    }

    /// Writes `manifest.json`. The run id hashes the subcommand, config and seed only.
    pub fn finish(
        self,
        subcommand: &str,
        config: &Value,
        master_seed: u64,
        seeds: Vec<SeedEntry>,
        events: u64,
        summary: Value,
        passed: bool,
    ) -> Result<RunRecord, CliError> {
        let id_src = format!("{subcommand}\n{config}\n{master_seed}");
        let record = RunRecord {
            run_id: sha256_hex(id_src.as_bytes())[..16].to_string(),
            subcommand: subcommand.to_string(),
            config: config.clone(),
            master_seed,
            seeds,
            outputs: self.outputs,
            metrics: Metrics {
                wall_clock_seconds: self.started.elapsed().as_secs_f64(),
                events,
            },
            summary,
            passed,
        };
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&record).map_err(|e| CliError::module("json", e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
