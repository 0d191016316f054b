use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointId {
    pub path: PathBuf,
    /// SHA-256 of the file contents.
    pub sha256: String,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub checkpoints: Vec<CheckpointId>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            checkpoints: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn checkpoint(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::data(
                format!("cannot read checkpoint {}: {e}", path.display()),
                "check the checkpoint path",
            )
        })?;
        self.checkpoints.push(CheckpointId {
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| {
            CliError::data(
                format!("cannot write {}: {e}", path.display()),
                "make the output directory writable",
            )
        })?;
        Ok(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        std::fs::write(&p, b"abc").unwrap();
        let mut m = RunManifest::new("train", serde_json::json!({}), Some(1));
        m.checkpoint(&p).unwrap();
        assert_eq!(
            m.checkpoints[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(m.checkpoint(&dir.path().join("missing")).unwrap_err().code(), 2);
        let written = m.write(dir.path()).unwrap();
        let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(written).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
