//! Run manifests: the fully resolved configuration of a run plus SHA-256
//! content hashes of every file it read and wrote. Re-running a command
//! from its manifest (or with the same flags) produces byte-identical
//! artifacts; `train-mae --replay` consumes these files directly.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;

/// A file the run touched, pinned by content.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub command: String,
    /// The command's entire resolved configuration, seeds included.
    pub config: serde_json::Value,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn stamp(path: &Path) -> anyhow::Result<FileStamp> {
    Ok(FileStamp {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Where the manifest for an artifact lives: `corpus.json` →
/// `corpus.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    artifact.with_extension("manifest.json")
}

impl Manifest {
    pub fn new(command: &str, config: impl Serialize) -> anyhow::Result<Self> {
        Ok(Manifest {
            manifest_version: MANIFEST_VERSION,
            tool: format!("metaenc {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Records an input file (hashed now, before the run mutates anything).
    pub fn add_input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(stamp(path)?);
        Ok(())
    }

    /// Records an output file after it has been written.
    pub fn add_output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.outputs.push(stamp(path)?);
        Ok(())
    }

    /// Writes the manifest next to `artifact` and returns its path.
    pub fn write_next_to(&self, artifact: &Path) -> anyhow::Result<PathBuf> {
        let path = manifest_path(artifact);
        fs::write(&path, serde_json::to_vec_pretty(self)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Manifest> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let m: Manifest = serde_json::from_slice(&bytes)
            .with_context(|| format!("{} is not a manifest", path.display()))?;
        if m.manifest_version != MANIFEST_VERSION {
            bail!(
                "{}: manifest version {} unsupported (this tool reads {})",
                path.display(),
                m.manifest_version,
                MANIFEST_VERSION
            );
        }
        Ok(m)
    }

    pub fn config_as<T: DeserializeOwned>(&self) -> anyhow::Result<T> {
        serde_json::from_value(self.config.clone())
            .context("manifest config does not match this command")
    }

    /// Confirms every recorded input still has the recorded content.
    pub fn verify_inputs(&self) -> anyhow::Result<()> {
        for f in &self.inputs {
            let now = sha256_file(Path::new(&f.path))?;
            if now != f.sha256 {
                bail!(
                    "input {} changed since the manifest was written \
                     (was {}, is {})",
                    f.path,
                    &f.sha256[..12],
                    &now[..12]
                );
            }
        }
        Ok(())
    }
}
