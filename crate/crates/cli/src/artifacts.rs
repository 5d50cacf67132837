//! Output directory bookkeeping: atomic writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `bytes` to `path` through a sibling temp file and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Collects emitted files and resolved constants; the manifest goes out last.
pub struct ArtifactStore {
    root: PathBuf,
    entries: Vec<ArtifactEntry>,
    constants: Map<String, Value>,
    started: Instant,
}

impl ArtifactStore {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
            constants: Map::new(),
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        assert!(name != MANIFEST_NAME, "manifest is written by finish");
        let path = self.root.join(name);
        write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let entry = ArtifactEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        };
        match self.entries.iter_mut().find(|e| e.path == name) {
            Some(old) => *old = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).context("serialising report")?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Record a resolved constant for the manifest.
    pub fn constant<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.constants.insert(key.to_string(), v);
    }

    /// Write the manifest: config echo, constants, version, wall clock and
    /// the hashed artifact list.
    pub fn finish(self, command: &str, config: Value) -> Result<Vec<ArtifactEntry>> {
        let manifest = json!({
            "software": {
                "name": env!("CARGO_PKG_NAME"),
                "version": env!("CARGO_PKG_VERSION"),
            },
            "command": command,
            "config": config,
            "constants": Value::Object(self.constants),
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
            "artifacts": self.entries,
        });
        let mut text = serde_json::to_string_pretty(&manifest).context("serialising manifest")?;
        text.push('\n');
        let path = self.root.join(MANIFEST_NAME);
        write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ArtifactStore::create(dir.path()).unwrap();
        store.write("a.csv", b"x\n1\n").unwrap();
        store.write("b.csv", b"y\n").unwrap();
        store.write("a.csv", b"x\n2\n").unwrap();
        store.constant("c_omega", 1.0);
        let entries = store.finish("test", json!({})).unwrap();
        assert_eq!(entries.len(), 2);
        let mut on_disk: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        on_disk.sort();
        assert_eq!(on_disk, ["a.csv", "b.csv", MANIFEST_NAME]);
        let m: Value = serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(m["artifacts"][0]["sha256"], sha256_hex(b"x\n2\n"));
        assert_eq!(m["constants"]["c_omega"], 1.0);
    }
}
