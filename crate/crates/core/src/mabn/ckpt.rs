//! Binary checkpoint format.
//!
//! ```text
//! b"PARZC1" | version: u8 | meta_len: u32 | meta (JSON)
//! | count: u32 | count x (name_len: u16, name, ndim: u8, dims: u32.., offset: u64)
//! | f64 payload, little-endian
//! ```
//! Offsets count `f64` elements from the start of the payload.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::mabn::config::MabnConfig;
use crate::mabn::params::MabnParams;

pub const MAGIC: &[u8; 6] = b"PARZC1";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MabnParams,
    /// Feature layout the model was trained on.
    pub layout: Option<DatasetManifest>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: MabnConfig,
    seed: u64,
    layout: Option<DatasetManifest>,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&Meta {
        config: ck.params.config.clone(),
        seed: ck.params.seed,
        layout: ck.layout.clone(),
    })
    .map_err(|e| Error::State(format!("checkpoint meta: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(ck.params.tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &ck.params.tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.len() as u64;
    }
    for t in ck.params.tensors.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Contract("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Contract("not a checkpoint: bad magic".into()));
    }
    let version = r.arr::<1>()?[0];
    if version != VERSION {
        return Err(Error::Contract(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = u32::from_le_bytes(r.arr()?) as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Contract(format!("checkpoint meta: {e}")))?;
    let count = u32::from_le_bytes(r.arr()?) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let nl = u16::from_le_bytes(r.arr()?) as usize;
        let name = std::str::from_utf8(r.take(nl)?)
            .map_err(|_| Error::Contract("checkpoint: tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.arr::<1>()?[0] as usize;
        let shape = (0..ndim)
            .map(|_| r.arr().map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = u64::from_le_bytes(r.arr()?) as usize;
        entries.push((name, shape, offset));
    }
    let payload = &bytes[r.pos..];
    if !payload.len().is_multiple_of(8) {
        return Err(Error::Contract("checkpoint payload is not a whole number of f64".into()));
    }
    let total = payload.len() / 8;
    let mut tensors = BTreeMap::new();
    for (name, shape, offset) in entries {
        let n: usize = shape.iter().product();
        if offset.checked_add(n).is_none_or(|e| e > total) {
            return Err(Error::Contract(format!("checkpoint: tensor `{name}` overruns payload")));
        }
        let data = payload[offset * 8..(offset + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        tensors.insert(name, Tensor::new(shape, data).map_err(|e| Error::Contract(e.to_string()))?);
    }
    let params = MabnParams {
        config: meta.config,
        seed: meta.seed,
        tensors,
    };
    params.validate().map_err(|e| Error::Contract(format!("checkpoint: {e}")))?;
    Ok(Checkpoint {
        params,
        layout: meta.layout,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
