//! Run manifest: per-stage fingerprints and content digests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of stage name, stage config and input digests.
    pub fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    /// Output paths relative to the run directory.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub stages: BTreeMap<String, StageRecord>,
    pub segment_counts: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> RunManifest {
        std::fs::read(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)
    }

    pub fn warnings(&self) -> impl Iterator<Item = (&str, &str)> {
        self.stages
            .iter()
            .flat_map(|(stage, r)| r.warnings.iter().map(move |w| (stage.as_str(), w.as_str())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of a directory tree (sorted relative paths and
/// file contents). A missing path digests to `"missing"`.
pub fn digest_path(path: &Path) -> std::io::Result<String> {
    if path.is_file() {
        return Ok(sha256_hex(&std::fs::read(path)?));
    }
    if !path.is_dir() {
        return Ok("missing".to_string());
    }
    let mut h = Sha256::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(path).expect("walk stays under root");
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(Sha256::digest(std::fs::read(entry.path())?));
        }
    }
    Ok(hex::encode(h.finalize()))
}

pub fn fingerprint(stage: &str, config: &serde_json::Value, inputs: &BTreeMap<String, String>) -> String {
    let doc = serde_json::json!({ "stage": stage, "config": config, "inputs": inputs });
    sha256_hex(doc.to_string().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_digest_sees_single_byte_changes() {
        let d = tempfile::tempdir().unwrap();
        std::fs::create_dir(d.path().join("a")).unwrap();
        std::fs::write(d.path().join("a/x.txt"), "hello").unwrap();
        std::fs::write(d.path().join("y.txt"), "world").unwrap();
        let before = digest_path(d.path()).unwrap();
        assert_eq!(before, digest_path(d.path()).unwrap());
        std::fs::write(d.path().join("a/x.txt"), "hellp").unwrap();
        assert_ne!(before, digest_path(d.path()).unwrap());
        assert_eq!(digest_path(&d.path().join("nope")).unwrap(), "missing");
    }

    #[test]
    fn manifest_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let mut m = RunManifest { tool_version: "x".into(), ..Default::default() };
        m.stages.insert("ingest".into(), StageRecord { warnings: vec!["w".into()], ..Default::default() });
        m.save(d.path()).unwrap();
        assert_eq!(RunManifest::load_or_default(d.path()), m);
        assert_eq!(m.warnings().collect::<Vec<_>>(), vec![("ingest", "w")]);
    }
}
