//! Report bundles: a directory of outputs plus `manifest.json`.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    /// `verb action`, e.g. `lln run`.
    pub command: String,
    /// Arguments after the program name; replaying them with another
    /// `--out` regenerates the bundle.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: Value,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory being filled; [`Bundle::finish`] writes the manifest.
#[derive(Debug)]
pub struct Bundle {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Bundle {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name == MANIFEST || self.files.iter().any(|f| f.name == name) {
            return Err(CliError::Argument(format!("duplicate bundle file {name}")));
        }
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn finish(self, command: &str, argv: Vec<String>, seed: Option<u64>, config: Value) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "dgeo".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: dgeo_core::VERSION.into(),
            command: command.into(),
            argv,
            seed,
            config,
            files: self.files,
        };
        let path = self.dir.join(MANIFEST);
        fs::write(&path, crate::io::json_bytes(&crate::io::to_value(&manifest))).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    crate::io::parse_json(&text, &path.display().to_string())
}

/// Files whose hash in `dir` differs from the manifest (or that are missing).
pub fn verify_bundle(manifest: &Manifest, dir: &Path) -> Vec<String> {
    manifest
        .files
        .iter()
        .filter(|f| fs::read(dir.join(&f.name)).map(|b| sha256_hex(&b) != f.sha256).unwrap_or(true))
        .map(|f| f.name.clone())
        .collect()
}
