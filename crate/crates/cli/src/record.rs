//! Run records stamped next to every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const RUN_RECORD: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Clock {
    started: SystemTime,
    timer: Instant,
}

impl Clock {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            timer: Instant::now(),
        }
    }
}

/// Writes `run.json` into the output directory, digesting each listed output.
pub fn write_run_record(config: &RunConfig, hash: &str, clock: &Clock, outputs: &[PathBuf]) -> Result<PathBuf> {
    let digests = outputs
        .iter()
        .map(|p| {
            Ok(OutputDigest {
                path: p
                    .strip_prefix(&config.out)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .replace('\\', "/"),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let record = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: &config.command,
        config_hash: hash,
        seed: config.seed,
        config,
        started_unix_secs: clock.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        elapsed_secs: clock.timer.elapsed().as_secs_f64(),
        outputs: digests,
    };
    let path = config.out.join(RUN_RECORD);
    fs::write(&path, serde_json::to_string_pretty(&record)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
