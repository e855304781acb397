//! Binary field snapshots.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  content
//! 0       4     magic "SLNS"
//! 4       4     u32 format version (1)
//! 8       4     u32 dim
//! 12      4     u32 rank          (bit 31 set: extension block follows)
//! 16      4     u32 n
//! 20      8     f64 L
//! 28      8     f64 time
//! [36     4     u32 ext_len, then ext_len bytes]    only if bit 31 of rank
//! ...           f64 values, node-major, component fastest
//! ```
//!
//! Flow-trajectory slices carry a 4-byte extension holding the u32
//! `path_index` of the Brownian path that produced them.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};

pub const MAGIC: &[u8; 4] = b"SLNS";
pub const VERSION: u32 = 1;
const EXT_FLAG: u32 = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub time: f64,
    pub path_index: Option<u32>,
}

impl Snapshot {
    pub fn new(field: Field, time: f64) -> Self {
        Self { field, time, path_index: None }
    }

    pub fn with_path(field: Field, time: f64, path_index: u32) -> Self {
        Self { field, time, path_index: Some(path_index) }
    }

    pub fn encode(&self) -> Vec<u8> {
        let g = self.field.grid();
        let values = self.field.to_interleaved();
        let mut out = Vec::with_capacity(48 + 8 * values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
        let mut rank = self.field.rank() as u32;
        if self.path_index.is_some() {
            rank |= EXT_FLAG;
        }
        out.extend_from_slice(&rank.to_le_bytes());
        out.extend_from_slice(&(g.n() as u32).to_le_bytes());
        out.extend_from_slice(&g.length().to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        if let Some(p) = self.path_index {
            out.extend_from_slice(&4u32.to_le_bytes());
            out.extend_from_slice(&p.to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = cur.u32()? as usize;
        let rank_raw = cur.u32()?;
        let n = cur.u32()? as usize;
        let length = cur.f64()?;
        let time = cur.f64()?;
        let rank = (rank_raw & !EXT_FLAG) as usize;
        let mut path_index = None;
        if rank_raw & EXT_FLAG != 0 {
            let len = cur.u32()? as usize;
            let ext = cur.take(len)?;
            if len >= 4 {
                path_index = Some(u32::from_le_bytes(ext[..4].try_into().unwrap()));
            }
        }
        let grid = TorusGrid::new(dim, n, length).map_err(|e| Error::Format(e.to_string()))?;
        if rank > 2 {
            return Err(Error::Format(format!("rank {rank}")));
        }
        let count = grid.components(rank) * grid.nodes();
        let raw = cur.take(count * 8)?;
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let field = Field::from_interleaved(grid, rank, &values)?;
        Ok(Self { field, time, path_index })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::decode(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Format("truncated snapshot".into()));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
