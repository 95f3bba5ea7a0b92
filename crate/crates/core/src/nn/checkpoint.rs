//! Checkpoints: a raw little-endian f32 parameter blob plus a JSON sidecar
//! manifest describing what the blob parameterizes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"FSTBCKP1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    /// "stabnet" | "refiner" | "discriminator"
    pub kind: String,
    pub spec: serde_json::Value,
    pub stage: u8,
    pub iteration: usize,
    pub seed: u64,
    pub loss_history_path: Option<String>,
}

/// Writes `<base>.bin` and `<base>.json`.
pub fn save_checkpoint(base: &Path, manifest: &CheckpointManifest, params: &[f32]) -> Result<()> {
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut blob = Vec::with_capacity(16 + 4 * params.len());
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    let bin = base.with_extension("bin");
    fs::write(&bin, blob).map_err(|e| Error::io(&bin, e))?;
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
    let json_path = base.with_extension("json");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

/// Loads a checkpoint given its base path or either of its two files.
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointManifest, Vec<f32>)> {
    let base: PathBuf = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let json_path = base.with_extension("json");
    let text = fs::read_to_string(&json_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::State(format!("missing checkpoint manifest {}", json_path.display()))
        }
        _ => Error::io(&json_path, e),
    })?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("checkpoint manifest parse: {e}")))?;

    let bin_path = base.with_extension("bin");
    let blob = fs::read(&bin_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::State(format!("missing checkpoint blob {}", bin_path.display()))
        }
        _ => Error::io(&bin_path, e),
    })?;
    if blob.len() < 16 || &blob[..8] != MAGIC {
        return Err(Error::Integrity(format!(
            "{} is not a parameter blob",
            bin_path.display()
        )));
    }
    let count = u64::from_le_bytes(blob[8..16].try_into().unwrap()) as usize;
    if blob.len() != 16 + 4 * count {
        return Err(Error::Integrity(format!(
            "parameter blob length mismatch: header says {count} params"
        )));
    }
    let mut params = Vec::with_capacity(count);
    for chunk in blob[16..].chunks_exact(4) {
        params.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok((manifest, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("ckpt");
        let manifest = CheckpointManifest {
            kind: "stabnet".into(),
            spec: serde_json::json!({"residual_blocks": 8, "base_width": 16}),
            stage: 1,
            iteration: 2000,
            seed: 7,
            loss_history_path: Some("loss.csv".into()),
        };
        let params: Vec<f32> = (0..1000).map(|i| i as f32 * 0.25 - 10.0).collect();
        save_checkpoint(&base, &manifest, &params).unwrap();
        let (m2, p2) = load_checkpoint(&base).unwrap();
        assert_eq!(m2.kind, "stabnet");
        assert_eq!(m2.stage, 1);
        assert_eq!(p2, params);
        // Loading via the json path works too.
        let (_, p3) = load_checkpoint(&base.with_extension("json")).unwrap();
        assert_eq!(p3, params);
    }

    #[test]
    fn missing_checkpoint_is_state_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_checkpoint(&dir.path().join("nope")),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn truncated_blob_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("ckpt");
        let manifest = CheckpointManifest {
            kind: "refiner".into(),
            spec: serde_json::Value::Null,
            stage: 1,
            iteration: 0,
            seed: 0,
            loss_history_path: None,
        };
        save_checkpoint(&base, &manifest, &[1.0, 2.0, 3.0]).unwrap();
        let bin = base.with_extension("bin");
        let mut blob = fs::read(&bin).unwrap();
        blob.truncate(blob.len() - 2);
        fs::write(&bin, blob).unwrap();
        assert!(matches!(
            load_checkpoint(&base),
            Err(Error::Integrity(_))
        ));
    }
}
