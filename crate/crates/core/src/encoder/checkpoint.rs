//! Checkpoint directories: `manifest.json` plus `params.bin`, a raw blob of
//! little-endian 64-bit floats in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{layout, Parameters, Tensor};
use super::ModelConfig;
use crate::scalar::Real;

pub const CHECKPOINT_VERSION: &str = "infostat-ckpt-1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("shape mismatch for tensor {tensor}: expected {expected:?}, manifest says {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
    /// Number of elements.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub endianness: String,
    pub dtype: String,
    pub config: ModelConfig,
    pub vocab_fingerprint: Option<String>,
    pub tensors: Vec<TensorEntry>,
}

/// Loaded checkpoint. Parameters are always held at 64-bit precision;
/// use [`Parameters::cast`] for other scalar types.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters<f64>,
    pub vocab_fingerprint: Option<String>,
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }
}

pub fn save_checkpoint<T: Real>(
    params: &Parameters<T>,
    vocab_fingerprint: Option<&str>,
    dir: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(params.numel() * 8);
    let mut entries = Vec::with_capacity(params.tensors().len());
    for t in params.tensors() {
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset: blob.len(),
            length: t.data.len(),
        });
        for &x in &t.data {
            blob.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION.to_owned(),
        endianness: "little".to_owned(),
        dtype: "f64".to_owned(),
        config: *params.config(),
        vocab_fingerprint: vocab_fingerprint.map(str::to_owned),
        tensors: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    fs::write(dir.join(PARAMS_FILE), blob)?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)
        .map_err(|e| CheckpointError::Corrupt(format!("manifest: {e}")))?;
    let blob = fs::read(dir.join(PARAMS_FILE))?;
    from_parts(&manifest, &blob)
}

fn from_parts(manifest: &Manifest, blob: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let corrupt = |msg: String| Err(CheckpointError::Corrupt(msg));
    if manifest.version != CHECKPOINT_VERSION {
        return corrupt(format!("unsupported version {:?}", manifest.version));
    }
    if manifest.endianness != "little" || manifest.dtype != "f64" {
        return corrupt(format!(
            "unsupported encoding {} {}",
            manifest.endianness, manifest.dtype
        ));
    }
    manifest
        .config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let expected = layout(&manifest.config);
    if expected.len() != manifest.tensors.len() {
        return corrupt(format!(
            "manifest lists {} tensors, config implies {}",
            manifest.tensors.len(),
            expected.len()
        ));
    }

    let mut tensors = Vec::with_capacity(expected.len());
    let mut cursor = 0;
    for ((name, shape, role), entry) in expected.into_iter().zip(&manifest.tensors) {
        if entry.name != name {
            return corrupt(format!("expected tensor {name}, found {}", entry.name));
        }
        let numel: usize = shape.iter().product();
        if entry.shape != shape || entry.length != numel {
            return Err(CheckpointError::ShapeMismatch {
                tensor: name,
                expected: shape,
                found: entry.shape.clone(),
            });
        }
        if entry.offset != cursor {
            return corrupt(format!("tensor {name} at byte {} instead of {cursor}", entry.offset));
        }
        let end = cursor + numel * 8;
        let Some(bytes) = blob.get(cursor..end) else {
            return corrupt(format!("blob truncated inside tensor {name} ({} bytes)", blob.len()));
        };
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Tensor { name, shape, role, data });
        cursor = end;
    }
    if cursor != blob.len() {
        return corrupt(format!("{} trailing bytes after the last tensor", blob.len() - cursor));
    }
    let params = Parameters::from_tensors(manifest.config, tensors)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    Ok(Checkpoint {
        params,
        vocab_fingerprint: manifest.vocab_fingerprint.clone(),
    })
}
