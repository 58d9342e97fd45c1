//! Reproducible batch runs over the `vcarleson` modules.
//!
//! A run validates its parameters, computes every output in memory from a single
//! seeded random stream, then writes the files and a `manifest.json` with their hashes.

pub mod config;
pub mod experiments;

use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::{Experiment, Overrides, Params, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(vcarleson::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> CliError {
        CliError::Config(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> CliError {
        CliError::Io(msg.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) => e.kind(),
        }
    }

    /// `{"error": {"kind": …, "message": …}}`.
    pub fn record(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vcarleson::Error> for CliError {
    fn from(e: vcarleson::Error) -> Self {
        CliError::Core(e)
    }
}

/// One output file, held in memory until the run finishes.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: Vec<u8>) -> Artifact {
        Artifact { name: name.to_string(), bytes }
    }

    pub fn json(name: &str, v: &Value) -> Artifact {
        let mut bytes = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
        bytes.push(b'\n');
        Artifact::new(name, bytes)
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// False when the experiment ran but its own checks failed (the selftest).
    pub passed: bool,
    pub manifest: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Validates, computes and writes one experiment.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let params = Params::new(cfg.parameters.clone());
    let job = experiments::prepare(cfg.experiment, &params)?;
    params.finish()?;
    let (artifacts, passed) = job.execute(cfg.seed, cfg.threads)?;
    write_outputs(&cfg.output_dir, &artifacts)?;
    let files: Vec<Value> = artifacts
        .iter()
        .map(|a| json!({ "file": a.name, "bytes": a.bytes.len(), "sha256": sha256_hex(&a.bytes) }))
        .collect();
    let manifest = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "output_dir": cfg.output_dir.display().to_string(),
        "parameters": Value::Object(params.resolved()),
        "passed": passed,
        "outputs": files,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    write_outputs(&cfg.output_dir, &[Artifact::json("manifest.json", &manifest)])?;
    Ok(Outcome { artifacts, passed, manifest })
}

fn write_outputs(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
