use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Serialize)]
struct Versions {
    relinfill: &'static str,
    checkpoint_format: u32,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
    versions: Versions,
    outputs: &'a [String],
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let canonical = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

/// Writes `manifest.json` describing a run into `dir`.
pub fn write(dir: &Path, command: &str, cfg: &RunConfig, outputs: &[String]) -> Result<()> {
    let manifest = Manifest {
        command,
        seed: cfg.seed,
        config_sha256: config_hash(cfg)?,
        config: cfg,
        versions: Versions {
            relinfill: env!("CARGO_PKG_VERSION"),
            checkpoint_format: relinfill::model::CHECKPOINT_VERSION,
        },
        outputs,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
