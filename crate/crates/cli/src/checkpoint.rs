//! Checkpoint directories: `manifest.json` describing every tensor, and
//! `tensors.bin` holding them as little-endian f32 in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use ddm_core::numerics::{ParameterSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{replace_dir_atomically, staging_dir};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const PAYLOAD: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Element count.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: String,
    pub metadata: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub payload_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub metadata: serde_json::Value,
    pub params: ParameterSet<f32>,
}

impl Checkpoint {
    fn encode(&self) -> CliResult<(Vec<u8>, Vec<u8>)> {
        let mut payload = Vec::with_capacity(self.params.numel() * 4);
        let mut tensors = Vec::with_capacity(self.params.len());
        for (name, t) in self.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset: payload.len(),
                len: t.numel(),
            });
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            metadata: self.metadata.clone(),
            tensors,
            payload_bytes: payload.len(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        Ok((json, payload))
    }

    /// Writes into a staging directory, then swaps it into place.
    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let (manifest, payload) = self.encode()?;
        let staging = staging_dir(dir)?;
        let written = (|| -> CliResult<()> {
            fs::write(staging.join(PAYLOAD), &payload)
                .map_err(|e| CliError::io(staging.join(PAYLOAD), e))?;
            fs::write(staging.join(MANIFEST), &manifest)
                .map_err(|e| CliError::io(staging.join(MANIFEST), e))?;
            Ok(())
        })();
        if let Err(e) = written {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        replace_dir_atomically(&staging, dir)
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(CliError::Checkpoint(format!(
                "{} has no {MANIFEST}; not a complete checkpoint",
                dir.display()
            )));
        }
        let text = fs::read(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(CliError::Checkpoint(format!(
                "unsupported checkpoint format version {}",
                manifest.format_version
            )));
        }
        let payload_path = dir.join(PAYLOAD);
        let payload = fs::read(&payload_path).map_err(|e| CliError::io(&payload_path, e))?;
        if payload.len() != manifest.payload_bytes {
            return Err(CliError::Checkpoint(format!(
                "payload has {} bytes, manifest promises {}",
                payload.len(),
                manifest.payload_bytes
            )));
        }
        let mut params = ParameterSet::new();
        let mut cursor = 0;
        for entry in &manifest.tensors {
            let product: usize = entry.shape.iter().product();
            if product != entry.len || entry.offset != cursor {
                return Err(CliError::Checkpoint(format!(
                    "tensor '{}' has inconsistent shape, length or offset",
                    entry.name
                )));
            }
            let end = cursor + 4 * entry.len;
            let bytes = payload.get(cursor..end).ok_or_else(|| {
                CliError::Checkpoint(format!("tensor '{}' runs past the payload", entry.name))
            })?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            params.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
            cursor = end;
        }
        if cursor != payload.len() {
            return Err(CliError::Checkpoint("payload has trailing bytes".into()));
        }
        Ok(Checkpoint {
            kind: manifest.kind,
            metadata: manifest.metadata,
            params,
        })
    }

    pub fn expect_kind(self, kind: &str) -> CliResult<Self> {
        if self.kind == kind {
            Ok(self)
        } else {
            Err(CliError::Checkpoint(format!(
                "expected a '{kind}' checkpoint, found '{}'",
                self.kind
            )))
        }
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParameterSet::new();
        params
            .insert(
                "a/w",
                Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, -0.0, 1e-30]).unwrap(),
            )
            .unwrap();
        params
            .insert(
                "b",
                Tensor::vector(vec![f32::MAX, f32::MIN_POSITIVE]).unwrap(),
            )
            .unwrap();
        Checkpoint {
            kind: "test".into(),
            metadata: serde_json::json!({ "seed": 3, "note": "x" }),
            params,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("ckpt");
        let ck = sample();
        ck.save(&dir).unwrap();
        let back = Checkpoint::load(&dir).unwrap();
        assert_eq!(back.kind, "test");
        assert!(back.params.bitwise_eq(&ck.params));
        let first = (
            fs::read(dir.join(MANIFEST)).unwrap(),
            fs::read(dir.join(PAYLOAD)).unwrap(),
        );
        back.save(&dir).unwrap();
        let second = (
            fs::read(dir.join(MANIFEST)).unwrap(),
            fs::read(dir.join(PAYLOAD)).unwrap(),
        );
        assert_eq!(first, second);
        assert_eq!(first.1.len(), 8 * 4);
    }

    #[test]
    fn refuses_incomplete_directories() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("partial");
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join(PAYLOAD), [0u8; 8]).unwrap();
        assert!(matches!(
            Checkpoint::load(&dir),
            Err(CliError::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("ckpt");
        sample().save(&dir).unwrap();
        let mut payload = fs::read(dir.join(PAYLOAD)).unwrap();
        payload.pop();
        fs::write(dir.join(PAYLOAD), payload).unwrap();
        assert!(matches!(
            Checkpoint::load(&dir),
            Err(CliError::Checkpoint(_))
        ));
    }
}
