//! Run manifests and write-once output directories.

use std::path::{Path, PathBuf};

use pcgat::config::sha256_hex;
use pcgat::{Error, SystemConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Self-description written next to every set of artifacts.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    /// Every configuration field, defaults included.
    pub effective_config: SystemConfig,
    pub config_hash: String,
    /// Command-specific settings (learning rate, lambda, input paths, ...).
    pub settings: Value,
    /// Hash over command, config, seed and settings.
    pub settings_hash: String,
    /// Artifact file names relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: &SystemConfig, settings: Value) -> Self {
        let semantic = serde_json::json!({
            "command": command,
            "config": config,
            "seed": seed,
            "settings": settings,
        });
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: std::env::args().collect(),
            seed,
            threads,
            effective_config: config.clone(),
            config_hash: config.hash_hex(),
            settings_hash: sha256_hex(semantic.to_string().as_bytes()),
            settings,
            artifacts: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> pcgat::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            reason: e.to_string(),
        })
    }
}

/// Output directory that refuses to overwrite anything.
pub struct OutDir {
    pub root: PathBuf,
    manifest: RunManifest,
}

impl OutDir {
    /// Create `root`, which must be absent or an empty directory.
    pub fn create(root: &Path, manifest: RunManifest) -> pcgat::Result<Self> {
        if root.exists() {
            let mut entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
            if entries.next().is_some() {
                return Err(Error::io(
                    root,
                    std::io::Error::new(
                        std::io::ErrorKind::AlreadyExists,
                        "output directory is not empty; outputs are write-once",
                    ),
                ));
            }
        }
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    /// Path for a new artifact, recorded in the manifest.
    pub fn artifact(&mut self, name: &str) -> pcgat::Result<PathBuf> {
        let path = self.root.join(name);
        if path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "artifact already exists"),
            ));
        }
        self.manifest.artifacts.push(name.into());
        Ok(path)
    }

    /// Record an artifact written by a helper that picked its own name.
    pub fn record(&mut self, path: &Path) {
        let name = path.strip_prefix(&self.root).unwrap_or(path);
        self.manifest.artifacts.push(name.to_string_lossy().into_owned());
    }

    pub fn finish(self) -> pcgat::Result<RunManifest> {
        let path = self.root.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, text.as_bytes()))
            .map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}
