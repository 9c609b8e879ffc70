//! Model checkpoints.
//!
//! Layout, all little-endian: the 8-byte magic `HOSEQCK1`; `u32` fields
//! `t_k, d_l, d_v, d_a` of the data the model was built for; a `u32` entry
//! count; per entry a `u32` name length, the UTF-8 name, a `u32` rank and
//! `u32` extents; then the raw `f64` values of every entry in manifest
//! order. Entries are the trainable parameters followed by the running
//! statistics.

use std::fs;
use std::path::Path;

use hoseq_core::data::DataDims;
use hoseq_core::params::ParamStore;
use hoseq_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"HOSEQCK1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: DataDims,
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, dims: DataDims) -> Self {
        let entries = store
            .iter()
            .chain(store.buffers())
            .map(|(name, value)| (name.to_string(), value.clone()))
            .collect();
        Self { dims, entries }
    }

    /// Copies every entry into `store`, which must hold exactly the same
    /// names and shapes.
    pub fn load_into(&self, store: &mut ParamStore, dims: DataDims) -> Result<()> {
        if self.dims != dims {
            let show = |d: DataDims| format!("t_k={} d_l={} d_v={} d_a={}", d.t_k, d.d_l, d.d_v, d.d_a);
            return Err(Error::data(format!(
                "checkpoint expects {}, found {}",
                show(self.dims),
                show(dims)
            )));
        }
        let expected = store.len() + store.buffers().count();
        if self.entries.len() != expected {
            return Err(Error::data(format!(
                "checkpoint has {} entries, the configured model has {expected}",
                self.entries.len()
            )));
        }
        for (name, value) in &self.entries {
            store.load_value(name, value.clone())?;
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let u32_le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        let d = self.dims;
        for v in [d.t_k, d.d_l, d.d_v, d.d_a, self.entries.len()] {
            u32_le(&mut out, v);
        }
        for (name, value) in &self.entries {
            u32_le(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            u32_le(&mut out, value.rank());
            for &e in value.shape() {
                u32_le(&mut out, e);
            }
        }
        for (_, value) in &self.entries {
            for v in value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let mut reader = Reader { bytes, at: MAGIC.len() };
        let dims = DataDims { t_k: reader.u32()?, d_l: reader.u32()?, d_v: reader.u32()?, d_a: reader.u32()? };
        let count = reader.u32()?;
        let mut manifest = Vec::new();
        for _ in 0..count {
            let len = reader.u32()?;
            let name = std::str::from_utf8(reader.take(len)?)
                .map_err(|_| Error::Format("checkpoint entry name is not UTF-8".into()))?
                .to_string();
            let rank = reader.u32()?;
            let shape = (0..rank).map(|_| reader.u32()).collect::<Result<Vec<_>>>()?;
            manifest.push((name, shape));
        }
        let mut entries = Vec::with_capacity(manifest.len());
        for (name, shape) in manifest {
            let len: usize = shape.iter().product();
            let raw = reader.take(len.checked_mul(8).ok_or_else(|| Error::Format("entry too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            let value = Tensor::from_vec(&shape, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
            if !value.is_finite() {
                return Err(Error::data(format!("checkpoint entry {name} holds non-finite values")));
            }
            entries.push((name, value));
        }
        if reader.at != bytes.len() {
            return Err(Error::Truncated(format!("{} bytes after the last checkpoint entry", bytes.len() - reader.at)));
        }
        Ok(Self { dims, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("checkpoint ends before byte {}", self.at + n)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}
