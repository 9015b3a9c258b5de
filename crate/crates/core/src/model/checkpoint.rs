//! Binary training checkpoint.
//!
//! All integers and floats are little-endian. `F` is the parameter width
//! named by the dtype byte (1 = f32, 2 = f64); training runs write f32.
//!
//! ```text
//! offset  size        field
//! 0       8           magic "LCMOCKPT"
//! 8       4  u32      format version (1)
//! 12      1  u8       dtype
//! 13      3           reserved, zero
//! 16      4  u32      E = number of encoder widths, followed by E × u32
//!         4  u32      projector hidden width
//!         4  u32      embedding width
//!         8  u64      P = parameter count
//!         P × F       query network parameters
//!         P × F       key network parameters
//!         P × F       SGD velocity
//!         8  u64      RNG key
//!         8  u64      RNG counter
//!         8  u64      global step
//!         8  u64      completed epochs
//!         8  u64      queue capacity C
//!         8  u64      queue width D
//!         8  u64      queue head
//!         8  u64      queue filled
//!         C × u64     queue slot stamps
//!         C·D × F     queue slots (physical order)
//! ```
//!
//! Parameter layout inside a network blob is described on
//! [`Network`](super::Network).

use std::path::Path;

use crate::error::{Error, Result};
use crate::membank::{NegativeQueue, QueueParts};
use crate::tensor::{Precision, Real, RngState};

use super::{EncoderPair, Network, NetworkSpec};

pub const MAGIC: &[u8; 8] = b"LCMOCKPT";
pub const VERSION: u32 = 1;

/// Complete resumable state of a pretraining run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub spec: NetworkSpec,
    pub query: Vec<T>,
    pub key: Vec<T>,
    pub velocity: Vec<T>,
    pub rng: RngState,
    pub step: u64,
    pub epoch: u64,
    pub queue: QueueParts<T>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::IncompatibleCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::IncompatibleCheckpoint("size overflow".into()))
    }

    fn floats<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let len = n
            .checked_mul(T::BYTES)
            .ok_or_else(|| Error::IncompatibleCheckpoint("size overflow".into()))?;
        Ok(self.take(len)?.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

/// Precision recorded in a checkpoint header.
pub fn peek_precision(bytes: &[u8]) -> Result<Precision> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::IncompatibleCheckpoint("bad magic".into()));
    }
    Precision::from_tag(bytes[12]).ok_or_else(|| Error::IncompatibleCheckpoint(format!("unknown dtype {}", bytes[12])))
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::PRECISION.tag());
        out.extend_from_slice(&[0; 3]);
        out.extend_from_slice(&(self.spec.encoder.len() as u32).to_le_bytes());
        for &d in &self.spec.encoder {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.spec.projector_hidden as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.embed_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.query.len() as u64).to_le_bytes());
        for blob in [&self.query, &self.key, &self.velocity] {
            for &v in blob.iter() {
                v.write_le(&mut out);
            }
        }
        for v in [
            self.rng.key,
            self.rng.counter,
            self.step,
            self.epoch,
            self.queue.capacity as u64,
            self.queue.dim as u64,
            self.queue.head as u64,
            self.queue.filled as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &s in &self.queue.stamps {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for &v in &self.queue.slots {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let precision = peek_precision(bytes)?;
        if precision != T::PRECISION {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint holds {precision:?} parameters, expected {:?}",
                T::PRECISION
            )));
        }
        let mut r = Reader { bytes, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::IncompatibleCheckpoint(format!("unsupported version {version}")));
        }
        r.take(4)?;
        let n_enc = r.u32()? as usize;
        if n_enc > 1024 {
            return Err(Error::IncompatibleCheckpoint("implausible encoder depth".into()));
        }
        let encoder = (0..n_enc)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let projector_hidden = r.u32()? as usize;
        let embed_dim = r.u32()? as usize;
        let spec = NetworkSpec::new(encoder, projector_hidden, embed_dim)
            .map_err(|e| Error::IncompatibleCheckpoint(e.to_string()))?;
        let p = r.usize()?;
        if p != spec.param_count() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "parameter count {p} does not match layer widths ({})",
                spec.param_count()
            )));
        }
        let query = r.floats(p)?;
        let key = r.floats(p)?;
        let velocity = r.floats(p)?;
        let rng = RngState {
            key: r.u64()?,
            counter: r.u64()?,
        };
        let step = r.u64()?;
        let epoch = r.u64()?;
        let capacity = r.usize()?;
        let dim = r.usize()?;
        let head = r.usize()?;
        let filled = r.usize()?;
        let stamps = (0..capacity).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let slots = r.floats(
            capacity
                .checked_mul(dim)
                .ok_or_else(|| Error::IncompatibleCheckpoint("size overflow".into()))?,
        )?;
        if r.pos != bytes.len() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            spec,
            query,
            key,
            velocity,
            rng,
            step,
            epoch,
            queue: QueueParts {
                capacity,
                dim,
                head,
                filled,
                stamps,
                slots,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn encoder_pair(&self) -> Result<EncoderPair<T>> {
        EncoderPair::from_parts(
            Network::from_params(self.spec.clone(), self.query.clone())?,
            Network::from_params(self.spec.clone(), self.key.clone())?,
        )
    }

    pub fn negative_queue(&self) -> Result<NegativeQueue<T>> {
        NegativeQueue::from_parts(self.queue.clone())
    }
}
