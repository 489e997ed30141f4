//! Single-file checkpoint archive.
//!
//! Layout: the 8-byte magic `CRYOCKPT`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then the raw little-endian
//! bytes of every tensor in header order. The header carries the architecture
//! fingerprint, free-form metadata (counters, optimizer scalars, RNG state) and the
//! tensor table. Encoding is deterministic, so save -> load -> save is byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CRYOCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 of the canonical JSON encoding of a configuration value.
pub fn fingerprint<T: Serialize>(cfg: &T) -> Result<String> {
    let value = serde_json::to_value(cfg).map_err(|e| Error::config(e.to_string()))?;
    let bytes = serde_json::to_vec(&value).map_err(|e| Error::config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
    bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    fingerprint: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub struct Archive {
    pub fingerprint: String,
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Archive {
    pub fn new(fingerprint: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            fingerprint: fingerprint.into(),
            meta,
            tensors: BTreeMap::new(),
        }
    }

    /// Adds every tensor of `group` under `prefix/`.
    pub fn insert_group(&mut self, prefix: &str, group: &BTreeMap<String, Tensor>) {
        for (k, v) in group {
            self.tensors.insert(format!("{prefix}/{k}"), v.clone());
        }
    }

    /// Tensors stored under `prefix/`, with the prefix stripped.
    pub fn group(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let p = format!("{prefix}/");
        self.tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn has_group(&self, prefix: &str) -> bool {
        let p = format!("{prefix}/");
        self.tensors.keys().any(|k| k.starts_with(&p))
    }

    pub fn ensure_fingerprint(&self, expected: &str) -> Result<()> {
        if self.fingerprint != expected {
            return Err(Error::Fingerprint {
                expected: expected.to_string(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut payload = Vec::new();
        for (name, t) in &self.tensors {
            let t = t.to_device(&Device::Cpu)?;
            let flat = t.flatten_all()?;
            let bytes: Vec<u8> = match t.dtype() {
                DType::F32 => flat.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
                DType::F64 => flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
                DType::U32 => flat.to_vec1::<u32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
                DType::I64 => flat.to_vec1::<i64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
                DType::U8 => flat.to_vec1::<u8>()?,
                other => {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name}: unsupported dtype {other:?}"
                    )))
                }
            };
            entries.push(TensorEntry {
                name: name.clone(),
                dtype: t.dtype().as_str().to_string(),
                shape: t.dims().to_vec(),
                offset: payload.len() as u64,
                bytes: bytes.len() as u64,
            });
            payload.extend_from_slice(&bytes);
        }
        let header = Header {
            fingerprint: self.fingerprint.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint archive (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated checkpoint"))?;
        let header: Header = serde_json::from_slice(body.get(..hlen).ok_or_else(|| bad("truncated header"))?)
            .map_err(|e| Error::Checkpoint(format!("corrupt header: {e}")))?;
        let payload = &body[hlen..];
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let start = e.offset as usize;
            let raw = payload
                .get(start..start + e.bytes as usize)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} is truncated", e.name)))?;
            let shape = e.shape.as_slice();
            let t = match e.dtype.as_str() {
                "f32" => Tensor::from_vec(le_values(raw, f32::from_le_bytes), shape, &Device::Cpu)?,
                "f64" => Tensor::from_vec(le_values(raw, f64::from_le_bytes), shape, &Device::Cpu)?,
                "u32" => Tensor::from_vec(le_values(raw, u32::from_le_bytes), shape, &Device::Cpu)?,
                "i64" => Tensor::from_vec(le_values(raw, i64::from_le_bytes), shape, &Device::Cpu)?,
                "u8" => Tensor::from_vec(raw.to_vec(), shape, &Device::Cpu)?,
                other => return Err(Error::Checkpoint(format!("tensor {}: unknown dtype {other}", e.name))),
            };
            tensors.insert(e.name, t);
        }
        Ok(Self {
            fingerprint: header.fingerprint,
            meta: header.meta,
            tensors,
        })
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn le_values<T, const N: usize>(raw: &[u8], f: fn([u8; N]) -> T) -> Vec<T> {
    raw.chunks_exact(N)
        .map(|c| f(c.try_into().expect("chunk of N bytes")))
        .collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
