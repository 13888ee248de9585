//! Parameter checkpoint files.
//!
//! Layout: `b"CKPT"`, `u32` version, `u64` header length, UTF-8 JSON header
//! `{"meta": .., "tensors": [{"name", "shape"}]}`, then every tensor as
//! little-endian `f32` in header order. All integers little-endian.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone)]
pub struct CheckpointData {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl CheckpointData {
    pub fn take(&mut self, name: &str) -> Result<Tensor> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| TensorError::Checkpoint(format!("missing tensor {name:?}")))?;
        Ok(self.tensors.remove(pos).1)
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    meta: serde_json::Value,
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let header = Header {
        meta,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorRecord {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::new();
    for (_, t) in tensors {
        buf.clear();
        buf.extend(t.data().iter().flat_map(|&v| (v as f32).to_le_bytes()));
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<CheckpointData> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for rec in header.tensors {
        let n: usize = rec.shape.iter().product();
        let mut bytes = vec![0u8; 4 * n];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.push((rec.name, Tensor::new(rec.shape, data)?));
    }
    Ok(CheckpointData {
        meta: header.meta,
        tensors,
    })
}
