//! Run manifest: every artifact written, with its content hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RunError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    /// Relative to the output directory.
    pub artifact: String,
    pub sha256: String,
    pub wall_time_s: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    /// Records (or replaces) an artifact already written under `dir`.
    pub fn record(&mut self, dir: &Path, stage: &str, artifact: &str, wall_time_s: f64, converged: bool) -> Result<()> {
        let sha256 = sha256_file(&dir.join(artifact))?;
        self.entries.retain(|e| e.artifact != artifact);
        self.entries.push(ManifestEntry {
            stage: stage.into(),
            artifact: artifact.into(),
            sha256,
            wall_time_s,
            converged,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.entries).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
        let entries =
            serde_json::from_str(&text).map_err(|e| RunError::Validation(format!("{}: {e}", path.display())))?;
        Ok(Manifest { entries })
    }

    /// Problems found comparing the manifest with the directory: missing
    /// files, hash mismatches and files on disk that are not listed.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut problems = Vec::new();
        for e in &self.entries {
            let p = dir.join(&e.artifact);
            if !p.is_file() {
                problems.push(format!("{} is listed but missing", e.artifact));
            } else if sha256_file(&p)? != e.sha256 {
                problems.push(format!("{} does not match its hash", e.artifact));
            }
        }
        let listed: Vec<&str> = self.entries.iter().map(|e| e.artifact.as_str()).collect();
        for entry in fs::read_dir(dir).map_err(|e| RunError::io(dir, e))? {
            let entry = entry.map_err(|e| RunError::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != MANIFEST_FILE && entry.path().is_file() && !listed.contains(&name.as_str()) {
                problems.push(format!("{name} is on disk but not listed"));
            }
        }
        Ok(problems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_hash_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "abc").unwrap();
        let mut m = Manifest::default();
        m.record(dir.path(), "emit", "a.csv", 0.1, true).unwrap();
        assert_eq!(m.entries[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        m.write(dir.path()).unwrap();
        assert_eq!(Manifest::read(dir.path()).unwrap(), m);
        assert!(m.verify(dir.path()).unwrap().is_empty());
        fs::write(dir.path().join("a.csv"), "abd").unwrap();
        fs::write(dir.path().join("b.csv"), "x").unwrap();
        let problems = m.verify(dir.path()).unwrap();
        assert_eq!(problems.len(), 2, "{problems:?}");
    }
}
