//! Run manifests: the record each command leaves behind, sufficient to
//! reproduce its outputs byte-for-byte.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Subcommand that produced the run.
    pub command: String,
    /// Tool version the run was made with.
    pub version: String,
    /// Top-level seed every stream was derived from.
    pub seed: u64,
    /// Fully resolved configuration (absolute paths, calibrated values).
    pub config: serde_json::Value,
    /// Artifact file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: u64,
        config: serde_json::Value,
        outputs: Vec<String>,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            outputs,
        }
    }

    /// Serializes with sorted keys and a trailing newline, atomically.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Config(format!("manifest serialization: {e}")))?;
        text.push('\n');
        crate::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
