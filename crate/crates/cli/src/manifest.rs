use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Command};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one run: enough to reproduce every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command arguments with every default filled in.
    pub args: Command,
    /// Library-level settings derived from the arguments.
    pub resolved: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Output files, relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub version: String,
    pub threads: usize,
    pub started_unix: f64,
    pub elapsed_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn digest(path: &Path, label: String) -> Result<FileDigest, CliError> {
    Ok(FileDigest {
        path: label,
        sha256: sha256_file(path)?,
    })
}

/// Digests of `relative` paths under `root`, labelled by the relative path.
pub fn digest_outputs(root: &Path, relative: &[PathBuf]) -> Result<Vec<FileDigest>, CliError> {
    relative
        .iter()
        .map(|r| digest(&root.join(r), r.to_string_lossy().replace('\\', "/")))
        .collect()
}

pub fn write(path: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(CliError::numeric)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: not a run manifest: {e}", path.display())))
}
