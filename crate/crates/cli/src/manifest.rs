use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::CliConfig;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest(path: &Path) -> anyhow::Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let hash = Sha256::digest(&bytes);
    Ok(FileDigest {
        path: path.to_owned(),
        bytes: bytes.len() as u64,
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// `run_manifest.json`: what ran, with which settings, on which inputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub parameters: Value,
    pub config: &'a CliConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'static str, config: &'a CliConfig, parameters: Value) -> Self {
        RunManifest {
            tool: "eduloop",
            version: env!("CARGO_PKG_VERSION"),
            command,
            parameters,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(digest(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("run_manifest.json");
        crate::write_json(&path, self)?;
        Ok(path)
    }
}
