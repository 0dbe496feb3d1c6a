//! Per-invocation run directory with a manifest of inputs and outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
    pub started_at: u64,
    pub finished_at: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct RunDir {
    pub root: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    /// Creates the directory. An existing manifest means the directory holds
    /// a previous run and is refused.
    pub fn create(root: &Path, command: &str) -> Result<RunDir> {
        if root.join(MANIFEST).exists() {
            anyhow::bail!(
                "{} already holds a run; choose a fresh output directory",
                root.display()
            );
        }
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: None,
                parameters: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at: now(),
                finished_at: 0,
            },
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.manifest.parameters.insert(key.to_string(), value.to_string());
    }

    /// Records an input file with its digest.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Path of an output file, registered in the manifest.
    pub fn output(&mut self, rel: &str) -> PathBuf {
        self.manifest.outputs.push(rel.to_string());
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        p
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let p = self.output(rel);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(rel, &text)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.finished_at = now();
        self.manifest.outputs.sort();
        self.manifest.outputs.dedup();
        let path = self.root.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_inputs_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "abc").unwrap();
        let out = dir.path().join("run");
        let mut run = RunDir::create(&out, "ingest").unwrap();
        run.seed(3);
        run.input(&input).unwrap();
        run.write_text("a/b.txt", "x").unwrap();
        run.finish().unwrap();
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(m["outputs"][0], "a/b.txt");
        assert_eq!(
            m["inputs"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(RunDir::create(&out, "ingest").is_err());
    }
}
