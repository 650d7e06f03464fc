use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Task};
use crate::error::CliError;
use crate::pipeline::execute;

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub task: Task,
    pub config: ExperimentConfig,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub knobs: Value,
    pub diagnostics: Value,
    pub outputs: Vec<OutputEntry>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs `config` and writes its CSV outputs plus `run.json` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunRecord, CliError> {
    let started = now_ms();
    let execution = execute(config)?;
    fs::create_dir_all(out_dir).map_err(|source| CliError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut outputs = Vec::with_capacity(execution.artifacts.len());
    for artifact in &execution.artifacts {
        write(&out_dir.join(&artifact.name), &artifact.contents)?;
        outputs.push(OutputEntry {
            file: artifact.name.clone(),
            bytes: artifact.contents.len(),
            sha256: hex::encode(Sha256::digest(&artifact.contents)),
        });
    }
    let record = RunRecord {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        task: config.task,
        config: config.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        knobs: execution.knobs,
        diagnostics: execution.diagnostics,
        outputs,
    };
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    write(&out_dir.join("run.json"), format!("{json}\n").as_bytes())?;
    Ok(record)
}
