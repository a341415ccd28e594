//! Checkpoint container.
//!
//! Layout: the 8-byte magic `GUILGET\0`, a little-endian u64 header length,
//! a UTF-8 JSON header, then every tensor's values as little-endian f64 in
//! header order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GUILGET\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 elements from the start of the payload.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    config: &ModelConfig,
    store: &ParamStore,
) -> Result<()> {
    let mut tensors = Vec::with_capacity(store.len());
    let mut offset = 0;
    for (_, name, t) in store.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            len: t.len(),
        });
        offset += t.len();
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(offset * 8);
    for (_, _, t) in store.iter() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint into its header and named tensors.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Header, Vec<(String, Tensor)>)> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let total: usize = header.tensors.iter().map(|t| t.len).sum();
    if payload.len() != total * 8 {
        return Err(bad(format!(
            "payload is {} bytes, header describes {}",
            payload.len(),
            total * 8
        )));
    }
    let mut out = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        if e.shape.iter().product::<usize>() != e.len || e.offset + e.len > total {
            return Err(bad(format!("inconsistent entry for `{}`", e.name)));
        }
        let data = payload[e.offset * 8..(e.offset + e.len) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
    }
    Ok((header, out))
}

/// Copies named tensors into `store`, requiring an exact match of names and
/// shapes.
pub fn load_into(store: &mut ParamStore, tensors: Vec<(String, Tensor)>) -> Result<()> {
    if tensors.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, t) in tensors {
        let id = store
            .find(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{name}`")))?;
        if store.get(id).shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for `{name}`: checkpoint {:?}, model {:?}",
                t.shape(),
                store.get(id).shape()
            )));
        }
        *store.get_mut(id) = t;
    }
    Ok(())
}
