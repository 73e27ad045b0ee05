//! Binary checkpoint: a header, a named tensor table and a raw payload.
//!
//! ```text
//! magic    8 bytes  "SAMGCKPT"
//! version  u32
//! count    u32      number of tensors
//! cfg_len  u64      followed by cfg_len bytes of UTF-8 run configuration
//! table    count × (name_len u32, name, rows u64, cols u64, offset u64)
//! payload  f64 values, offsets relative to the payload start
//! ```
//!
//! Every integer and float is little-endian.

use std::fs;
use std::path::Path;

use crate::autodiff::ParamStore;
use crate::error::{CheckpointErrorKind, Result, SamgcError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SAMGCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            SamgcError::checkpoint(
                CheckpointErrorKind::Truncated,
                format!("file ends inside {what} at byte {}", self.pos),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| corrupt(format!("{what} {v} does not fit in memory")))
    }
}

fn corrupt(msg: String) -> SamgcError {
    SamgcError::checkpoint(CheckpointErrorKind::CorruptHeader, msg)
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, config: impl Into<String>) -> Self {
        Checkpoint {
            config: config.into(),
            tensors: store
                .iter()
                .map(|(_, p)| (p.name().to_string(), p.value().clone()))
                .collect(),
        }
    }

    /// Copies values into `store`, which must hold exactly the same names
    /// and shapes in the same order.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<()> {
        let mismatch = |m: String| SamgcError::checkpoint(CheckpointErrorKind::Mismatch, m);
        if store.len() != self.tensors.len() {
            return Err(mismatch(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for (id, (name, t)) in ids.into_iter().zip(&self.tensors) {
            let p = store.get_mut(id);
            if p.name() != name || p.value().shape() != t.shape() {
                return Err(mismatch(format!(
                    "checkpoint tensor {name} {:?} against model parameter {} {:?}",
                    t.shape(),
                    p.name(),
                    p.value().shape()
                )));
            }
            *p.value_mut() = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 8 * t.len() as u64;
        }
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(SamgcError::checkpoint(
                CheckpointErrorKind::VersionMismatch,
                format!("format version {version}, this build reads {VERSION}"),
            ));
        }
        let count = r.u32("tensor count")? as usize;
        let cfg_len = r.len("config length")?;
        let config = std::str::from_utf8(r.take(cfg_len, "config")?)
            .map_err(|_| corrupt("config is not UTF-8".into()))?
            .to_string();
        let mut table = Vec::with_capacity(count.min(1 << 16));
        let mut expected = 0usize;
        for _ in 0..count {
            let name_len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| corrupt("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.len("rows")?;
            let cols = r.len("cols")?;
            let offset = r.len("offset")?;
            if offset != expected {
                return Err(corrupt(format!("tensor {name} at offset {offset}, expected {expected}")));
            }
            let bytes = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| corrupt(format!("tensor {name} of {rows}x{cols} overflows")))?;
            expected += bytes;
            table.push((name, rows, cols));
        }
        let mut tensors = Vec::with_capacity(table.len());
        for (name, rows, cols) in table {
            let raw = r.take(rows * cols * 8, "payload")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::new(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| SamgcError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| SamgcError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
