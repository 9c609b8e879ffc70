//! MMSEQ: fixed-length aligned multimodal sequences with scalar labels.
//!
//! Layout, all little-endian: the 8-byte magic `MMSEQ1\0\0`; `u32` fields
//! `n, t_k, d_l, d_v, d_a`; then `f32` blocks for language
//! (`n * t_k * d_l`), visual, acoustic and the `n` labels. Blocks are
//! instance-major and row-major within an instance.

use std::fs;
use std::path::Path;

use hoseq_core::data::{DataDims, MultimodalDataset, MultimodalInstance, Split};
use hoseq_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"MMSEQ1\0\0";
pub const HEADER_LEN: usize = 8 + 5 * 4;

/// Header fields of an MMSEQ file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n: usize,
    pub dims: DataDims,
}

impl Header {
    /// Total file length the header implies, `None` on overflow.
    pub fn file_len(&self) -> Option<u64> {
        let DataDims { t_k, d_l, d_v, d_a } = self.dims;
        let per_instance = (t_k as u64).checked_mul(d_l as u64 + d_v as u64 + d_a as u64)?.checked_add(1)?;
        (self.n as u64).checked_mul(per_instance)?.checked_mul(4)?.checked_add(HEADER_LEN as u64)
    }
}

pub fn encode(dataset: &MultimodalDataset) -> Result<Vec<u8>> {
    let n = dataset.len();
    let dims = dataset.dims();
    let header = Header { n, dims };
    let len = header.file_len().ok_or_else(|| Error::data("dataset too large for MMSEQ"))?;
    let mut out = Vec::with_capacity(len as usize);
    out.extend_from_slice(&MAGIC);
    for field in [n, dims.t_k, dims.d_l, dims.d_v, dims.d_a] {
        let field = u32::try_from(field).map_err(|_| Error::data(format!("{field} does not fit a u32 header field")))?;
        out.extend_from_slice(&field.to_le_bytes());
    }
    let push = |out: &mut Vec<u8>, values: &[f64]| {
        for &v in values {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::data(format!("{v} does not fit a 32-bit float")));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
        Ok(())
    };
    for x in dataset.instances() {
        push(&mut out, x.language().data())?;
    }
    for x in dataset.instances() {
        push(&mut out, x.visual().data())?;
    }
    for x in dataset.instances() {
        push(&mut out, x.acoustic().data())?;
    }
    push(&mut out, &dataset.labels())?;
    Ok(out)
}

pub fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("bad MMSEQ magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len())));
    }
    let field = |i: usize| {
        let at = MAGIC.len() + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
    };
    let dims = DataDims { t_k: field(1), d_l: field(2), d_v: field(3), d_a: field(4) };
    Ok(Header { n: field(0), dims })
}

pub fn decode(bytes: &[u8], split: Split) -> Result<MultimodalDataset> {
    let header = read_header(bytes)?;
    let Header { n, dims } = header;
    let expected = header.file_len().ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated(format!("file has {} bytes, header implies {expected}", bytes.len())));
    }
    if n == 0 || dims.t_k == 0 || dims.d_l == 0 || dims.d_v == 0 || dims.d_a == 0 {
        return Err(Error::Format(format!("header has an empty extent: n={n} {dims}")));
    }

    let mut at = HEADER_LEN;
    let mut block = |count: usize, what: &str| -> Result<Vec<f64>> {
        let values: Vec<f64> = bytes[at..at + 4 * count]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite {what} value at element {i}")));
        }
        at += 4 * count;
        Ok(values)
    };
    let language = block(n * dims.t_k * dims.d_l, "language")?;
    let visual = block(n * dims.t_k * dims.d_v, "visual")?;
    let acoustic = block(n * dims.t_k * dims.d_a, "acoustic")?;
    let labels = block(n, "label")?;

    let slice = |data: &[f64], i: usize, d: usize| {
        let size = dims.t_k * d;
        Tensor::from_vec(&[dims.t_k, d], data[i * size..(i + 1) * size].to_vec())
    };
    let instances = (0..n)
        .map(|i| {
            let x = MultimodalInstance::new(
                slice(&language, i, dims.d_l)?,
                slice(&visual, i, dims.d_v)?,
                slice(&acoustic, i, dims.d_a)?,
                labels[i],
            );
            x.map_err(|e| match e {
                hoseq_core::Error::Data(msg) => Error::data(format!("instance {i}: {msg}")),
                other => other.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultimodalDataset::new(instances, split)?)
}

pub fn write_mmseq(dataset: &MultimodalDataset, path: &Path) -> Result<()> {
    fs::write(path, encode(dataset)?).map_err(|e| Error::io(path, e))
}

pub fn read_mmseq(path: &Path, split: Split) -> Result<MultimodalDataset> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?, split)
}
