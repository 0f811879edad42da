//! Binary parameter files.
//!
//! Layout: the magic bytes `LBRD1`, a little-endian `u64` manifest length, the
//! manifest as UTF-8 JSON, then every tensor's values row-major little-endian
//! in manifest order. The manifest names the precision and each tensor's shape
//! and carries a free-form `meta` object for the caller.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 5] = b"LBRD1";

/// Tensors in file order with their names.
pub type NamedTensors<T> = Vec<(String, Tensor<T>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub precision: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn encode<T: Real>(meta: &serde_json::Value, tensors: &[(&str, &Tensor<T>)]) -> Vec<u8> {
    let manifest = Manifest {
        precision: T::NAME.to_string(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&manifest).expect("manifest serializes");
    let n_values: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + n_values * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in tensors {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

fn corrupt<T>(offset: usize, reason: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint {
        offset,
        reason: reason.into(),
    })
}

/// Parse just the manifest.
pub fn decode_manifest(bytes: &[u8]) -> Result<(Manifest, usize)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return corrupt(0, "bad magic bytes (not a checkpoint)");
    }
    let len_end = MAGIC.len() + 8;
    if bytes.len() < len_end {
        return corrupt(MAGIC.len(), "truncated manifest length");
    }
    let len = u64::from_le_bytes(bytes[MAGIC.len()..len_end].try_into().expect("8 bytes")) as usize;
    let header_end = len_end.checked_add(len).filter(|&e| e <= bytes.len());
    let Some(header_end) = header_end else {
        return corrupt(len_end, format!("manifest of {len} bytes runs past end of file"));
    };
    let manifest: Manifest = match serde_json::from_slice(&bytes[len_end..header_end]) {
        Ok(m) => m,
        Err(e) => return corrupt(len_end + e.column().saturating_sub(1), format!("manifest json: {e}")),
    };
    Ok((manifest, header_end))
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<(Manifest, NamedTensors<T>)> {
    let (manifest, mut offset) = decode_manifest(bytes)?;
    if manifest.precision != T::NAME {
        return Err(Error::ManifestMismatch(format!(
            "checkpoint precision {} but {} requested",
            manifest.precision,
            T::NAME
        )));
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let end = offset + n * T::BYTES;
        if end > bytes.len() {
            return corrupt(
                offset,
                format!(
                    "tensor {} needs {} bytes, {} remain",
                    entry.name,
                    n * T::BYTES,
                    bytes.len() - offset
                ),
            );
        }
        let data = bytes[offset..end].chunks_exact(T::BYTES).map(T::read_le).collect();
        tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)?));
        offset = end;
    }
    if offset != bytes.len() {
        return corrupt(offset, format!("{} trailing bytes", bytes.len() - offset));
    }
    Ok((manifest, tensors))
}

pub fn write<T: Real>(path: &Path, meta: &serde_json::Value, tensors: &[(&str, &Tensor<T>)]) -> Result<()> {
    std::fs::write(path, encode(meta, tensors)).map_err(|e| Error::io(path, e))
}

pub fn read<T: Real>(path: &Path) -> Result<(Manifest, NamedTensors<T>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Read only the manifest (to pick a precision before a full load).
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_manifest(&bytes).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Vec<u8> {
        let a = Tensor::<f32>::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        let b = Tensor::<f32>::vector(vec![-1.0]);
        encode(&json!({"kind": "test"}), &[("a", &a), ("b", &b)])
    }

    #[test]
    fn round_trip() {
        let bytes = sample();
        assert_eq!(&bytes[..5], b"LBRD1");
        let (m, t) = decode::<f32>(&bytes).unwrap();
        assert_eq!(m.meta["kind"], "test");
        assert_eq!(t[0].0, "a");
        assert_eq!(t[0].1.data(), &[1.0, 2.0, 3.0, 4.5]);
        assert_eq!(t[1].1.shape(), &[1]);
    }

    #[test]
    fn values_are_little_endian_row_major() {
        let bytes = sample();
        let tail = &bytes[bytes.len() - 20..];
        let vals: Vec<f32> = tail
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.5, -1.0]);
    }

    #[test]
    fn precision_mismatch_fails() {
        assert!(matches!(decode::<f64>(&sample()), Err(Error::ManifestMismatch(_))));
    }

    #[test]
    fn corruption_reports_offsets() {
        let mut bytes = sample();
        bytes[0] = b'X';
        assert!(matches!(
            decode::<f32>(&bytes),
            Err(Error::Checkpoint { offset: 0, .. })
        ));

        let bytes = sample();
        let truncated = &bytes[..bytes.len() - 3];
        match decode::<f32>(truncated) {
            Err(Error::Checkpoint { offset, .. }) => assert_eq!(offset, bytes.len() - 4),
            other => panic!("{other:?}"),
        }

        let mut extra = sample();
        extra.push(0);
        assert!(matches!(decode::<f32>(&extra), Err(Error::Checkpoint { .. })));

        assert!(matches!(
            decode::<f32>(&bytes[..9]),
            Err(Error::Checkpoint { offset: 5, .. })
        ));
    }
}
