use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Resolved configuration with `output_dir` cleared.
    pub config: Value,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("rydsq".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("parallel_feature".to_string(), cfg!(feature = "parallel").to_string()),
    ])
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, out_dir: &Path, outputs: &[PathBuf]) -> Result<Self> {
        let mut c = cfg.clone();
        c.output_dir = None;
        let config = c.to_value();
        let inputs = cfg
            .inputs
            .paths()
            .into_iter()
            .map(|(_, p)| Ok(FileDigest { path: p.to_path_buf(), sha256: file_digest(p)? }))
            .collect::<Result<_>>()?;
        let outputs = outputs
            .iter()
            .map(|p| Ok(FileDigest { path: p.clone(), sha256: file_digest(&out_dir.join(p))? }))
            .collect::<Result<_>>()?;
        Ok(Manifest {
            command: command.to_string(),
            config_sha256: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
            config,
            seed: cfg.seed,
            versions: versions(),
            inputs,
            outputs,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let p = out_dir.join(MANIFEST_FILE);
        fs::write(&p, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Output files whose digests differ from `other`, or are missing there.
    pub fn differing_outputs(&self, other: &Manifest) -> Vec<PathBuf> {
        self.outputs
            .iter()
            .filter(|d| !other.outputs.contains(d))
            .map(|d| d.path.clone())
            .chain(other.outputs.iter().filter(|d| !self.outputs.iter().any(|e| e.path == d.path)).map(|d| d.path.clone()))
            .collect()
    }
}
