//! Weight files.
//!
//! ```text
//! "VXW1" | header length (u32) | JSON header | f32 payload
//! ```
//!
//! The header lists every tensor by name and shape in payload order, plus a
//! free-form `meta` object for the owner's configuration. All numbers are
//! little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VXW1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(TensorEntry, Vec<f32>)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Result<()> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::DimMismatch(format!("{} values for shape {shape:?}", values.len())));
        }
        self.tensors.push((TensorEntry { name: name.into(), shape }, values));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&(TensorEntry, Vec<f32>)> {
        self.tensors
            .iter()
            .find(|(e, _)| e.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
        })?;
        let payload: usize = self.tensors.iter().map(|(_, v)| v.len()).sum();
        let mut out = Vec::with_capacity(8 + header.len() + 4 * payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, v) in &self.tensors {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 8 || &b[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let hlen = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(b.get(8..8 + hlen).ok_or_else(|| Error::format("checkpoint", "truncated header"))?)?;
        let mut off = 8 + hlen;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let bytes = b.get(off..off + 4 * n).ok_or_else(|| Error::format("checkpoint", format!("truncated tensor `{}`", e.name)))?;
            let v = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((e, v));
            off += 4 * n;
        }
        if off != b.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
