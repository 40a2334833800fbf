use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Everything needed to reproduce an output: identical manifests give
/// byte-identical files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(command: &'static str, seed: Option<u64>, config: impl Serialize) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        let hex: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex });
    }
}

/// `body` with the manifest as an extra top-level field.
pub fn with_manifest<T: Serialize>(body: &T, manifest: &RunManifest) -> Result<String> {
    let mut value = serde_json::to_value(body)?;
    match value.as_object_mut() {
        Some(map) => {
            map.insert("manifest".into(), serde_json::to_value(manifest)?);
        }
        None => anyhow::bail!("output is not a JSON object"),
    }
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes next to the target and renames into place, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write into {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(())
}

/// Staged outputs, committed together once every one has been rendered.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn add(&mut self, path: &Path, contents: String) {
        self.files.push((path.to_path_buf(), contents));
    }

    /// A data file plus its `.manifest.json` sidecar.
    pub fn add_with_sidecar(&mut self, path: &Path, contents: String, manifest: &RunManifest) -> Result<()> {
        self.add(path, contents);
        self.add(&sidecar_path(path), serde_json::to_string_pretty(manifest)? + "\n");
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        for (path, contents) in self.files {
            write_atomic(&path, &contents)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_path(Path::new("out/trace.jsonl")), PathBuf::from("out/trace.jsonl.manifest.json"));
    }

    #[test]
    fn manifest_is_embedded() {
        let m = RunManifest::new("plan", Some(3), serde_json::json!({"k": 2}));
        let s = with_manifest(&serde_json::json!({"a": 1}), &m).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["manifest"]["command"], "plan");
        assert_eq!(v["a"], 1);
        assert!(with_manifest(&[1, 2], &m).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
