//! Per-run manifest written next to the command's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| parzc::Error::Io { path: path.to_path_buf(), source: e })?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: format!("{:x}", Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    /// Extra run facts that would break byte-identical outputs (timings).
    pub notes: BTreeMap<String, serde_json::Value>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Collects what a run reads and writes, then writes `manifest.json`.
pub struct Recorder {
    command: String,
    argv: Vec<String>,
    started: f64,
    clock: Instant,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    notes: BTreeMap<String, serde_json::Value>,
}

impl Recorder {
    pub fn start(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            started: unix_now(),
            clock: Instant::now(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, value: &impl Serialize) -> Result<()> {
        self.config = serde_json::to_value(value).context("serializing resolved config")?;
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn note(&mut self, name: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.notes.insert(name.to_string(), v);
        }
    }

    /// Writes `contents` to `dir/name` and records it as an output.
    pub fn write(&mut self, dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| parzc::Error::Io { path: path.clone(), source: e })?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Records a file written by a library call.
    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn finish(self, dir: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            argv: self.argv,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            started_unix: self.started,
            finished_unix: unix_now(),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            notes: self.notes,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).context("serializing manifest")? + "\n";
        std::fs::write(&path, text).map_err(|e| parzc::Error::Io { path, source: e })?;
        Ok(())
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| parzc::Error::Io { path: dir.to_path_buf(), source: e })?;
    Ok(())
}
