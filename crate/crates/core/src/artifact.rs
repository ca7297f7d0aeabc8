//! Content hashing and the run manifest written beside every output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Provenance record for one command invocation.
///
/// Timestamps live here and nowhere else, so the artifacts themselves stay
/// byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_path: Option<String>,
    pub config_hash: Option<String>,
    /// Input artifact name -> sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output artifact path -> sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn manifest_path(artifact: &Path) -> std::path::PathBuf {
        let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| Error::Provenance(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Checks that `artifact` still hashes to what its producing run recorded.
    pub fn verify_output(&self, artifact: &Path) -> Result<String> {
        let hash = file_hash(artifact)?;
        let recorded = self
            .outputs
            .iter()
            .find(|(p, _)| Path::new(p).file_name() == artifact.file_name())
            .map(|(_, h)| h);
        match recorded {
            Some(h) if *h == hash => Ok(hash),
            Some(h) => Err(Error::Provenance(format!(
                "{} hashes to {hash}, manifest recorded {h}",
                artifact.display()
            ))),
            None => Err(Error::Provenance(format!(
                "manifest does not list {}",
                artifact.display()
            ))),
        }
    }
}
