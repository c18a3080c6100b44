//! SHA-256 verification of dataset files against a JSON manifest that maps
//! file names (relative to a base directory) to lowercase hex digests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileStatus {
    Ok,
    Mismatch { expected: String, actual: String },
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChecksumReport {
    pub entries: Vec<(PathBuf, FileStatus)>,
}

impl ChecksumReport {
    pub fn all_ok(&self) -> bool {
        self.entries.iter().all(|(_, s)| *s == FileStatus::Ok)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Checks every manifest entry; missing files are reported, not raised.
pub fn verify_checksums(manifest_path: &Path, base_dir: &Path) -> Result<ChecksumReport> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest_path.to_path_buf(),
        source: e,
    })?;
    let mut entries = Vec::with_capacity(manifest.len());
    for (name, expected) in manifest {
        let path = base_dir.join(&name);
        let status = if !path.is_file() {
            FileStatus::Missing
        } else {
            let actual = sha256_file(&path)?;
            let expected = expected.to_ascii_lowercase();
            if actual == expected {
                FileStatus::Ok
            } else {
                FileStatus::Mismatch { expected, actual }
            }
        };
        entries.push((path, status));
    }
    Ok(ChecksumReport { entries })
}
