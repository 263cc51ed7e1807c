//! Little-endian `f32` array files.
//!
//! Layout: 8-byte magic `EDCNET01`, three `u64` dimensions, then
//! `d0 * d1 * d2` row-major `f32` values. The trailing two bytes of the magic
//! carry the format version.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC_PREFIX: &[u8; 6] = b"EDCNET";
pub const FORMAT_VERSION: &[u8; 2] = b"01";
const HEADER_LEN: usize = 8 + 3 * 8;

/// A dense 3-D `f32` array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub dims: [u64; 3],
    pub data: Vec<f32>,
}

impl ArrayFile {
    pub fn new(dims: [u64; 3], data: Vec<f32>) -> Result<Self> {
        let n = dims.iter().product::<u64>();
        if n != data.len() as u64 {
            return Err(Error::shape(
                format!("{dims:?} ({n} values)"),
                format!("{} values", data.len()),
            ));
        }
        Ok(ArrayFile { dims, data })
    }

    /// Rows as a 2-D view when `dims[2] == 1`, or flattened `(d0, d1*d2)` otherwise.
    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        let width = (self.dims[1] * self.dims[2]).max(1) as usize;
        self.data.chunks(width)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC_PREFIX);
        out.extend_from_slice(FORMAT_VERSION);
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..6] != MAGIC_PREFIX {
            return Err(Error::format(path, "missing EDCNET magic"));
        }
        if &bytes[6..8] != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.into(),
                found: String::from_utf8_lossy(&bytes[6..8]).into_owned(),
                expected: String::from_utf8_lossy(FORMAT_VERSION).into_owned(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                path: path.into(),
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let mut dims = [0u64; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            let mut b = [0u8; 8];
            b.copy_from_slice(&bytes[8 + 8 * i..16 + 8 * i]);
            *d = u64::from_le_bytes(b);
        }
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(path, "dimension product overflows"))?;
        let expected = count
            .checked_mul(4)
            .and_then(|b| b.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| Error::format(path, "dimension product overflows"))?;
        let found = bytes.len() as u64;
        if found < expected {
            return Err(Error::Truncated {
                path: path.into(),
                expected,
                found,
            });
        }
        if found > expected {
            return Err(Error::format(
                path,
                format!("{} trailing bytes after array data", found - expected),
            ));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(ArrayFile { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}
