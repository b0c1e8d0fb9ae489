//! Little-endian weight blobs.
//!
//! Layout:
//!
//! ```text
//! magic    8 bytes   b"SPLTEMB1" (embedding) or b"SPLTSKM1" (skim scorer)
//! version  u32       1
//! rows     u32
//! cols     u32
//! n_meta   u32       number of f64 metadata values that follow
//! meta     f64 × n_meta
//! values   f64 × rows·cols, row-major
//! ```

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"SPLTEMB1";
pub const SKIM_MAGIC: &[u8; 8] = b"SPLTSKM1";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub rows: usize,
    pub cols: usize,
    pub meta: Vec<f64>,
    pub values: Vec<f64>,
}

impl Blob {
    pub fn encode(&self, magic: &[u8; 8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * (self.meta.len() + self.values.len()));
        out.extend_from_slice(magic);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for v in self.meta.iter().chain(&self.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], magic: &[u8; 8]) -> Result<Self> {
        let bad = |d: &str| Error::Data(format!("weight blob: {d}"));
        if bytes.len() < 24 {
            return Err(bad("truncated header"));
        }
        if &bytes[..8] != magic {
            return Err(bad("wrong magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        if word(8) != VERSION as usize {
            return Err(bad("unsupported version"));
        }
        let (rows, cols, n_meta) = (word(12), word(16), word(20));
        let total = n_meta + rows * cols;
        if bytes.len() != 24 + 8 * total {
            return Err(bad("length does not match header"));
        }
        let mut floats = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let meta: Vec<f64> = floats.by_ref().take(n_meta).collect();
        let values: Vec<f64> = floats.collect();
        if values.iter().chain(&meta).any(|v| !v.is_finite()) {
            return Err(bad("non-finite value"));
        }
        Ok(Blob {
            rows,
            cols,
            meta,
            values,
        })
    }
}
