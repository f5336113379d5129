use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::graphstore::write_atomic;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let hash = Sha256::digest(&bytes);
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

/// Reproducibility record of one stage: the resolved configuration, the
/// seeds it derived, and digests of what it read and wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub stage: &'a str,
    pub version: &'a str,
    pub config: &'a RunConfig,
    pub seeds: Vec<(&'a str, u64)>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl<'a> RunManifest<'a> {
    pub fn new(stage: &'a str, config: &'a RunConfig) -> Self {
        Self {
            stage,
            version: env!("CARGO_PKG_VERSION"),
            config,
            seeds: vec![("master", config.seed)],
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.config.out.join("manifest").join(format!("{}.json", self.stage));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format("manifest", e))? + "\n";
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
