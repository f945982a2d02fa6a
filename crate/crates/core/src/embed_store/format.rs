//! Binary embedding file (`OSWB-EMB1`).
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 9    | magic `OSWB-EMB1`                       |
//! | 9      | 2    | format version (`u16`, currently 1)     |
//! | 11     | 4    | record count (`u32`)                    |
//! | 15     | 4    | dim (`u32`, > 0)                        |
//! | 19     | 2    | patch rows (`u16`)                      |
//! | 21     | 2    | patch cols (`u16`); `0,0` = no grids    |
//! | 23     | ...  | ids: per record `u32` byte length + UTF-8 |
//! |        | ...  | `count × dim` `f32` image vectors        |
//! |        | ...  | `count × rows × cols × dim` `f32` grids  |
//!
//! A header-only file (count 0) is exactly [`HEADER_LEN`] bytes.

use super::{EmbedError, EmbeddingSet, Result};

pub const MAGIC: &[u8; 9] = b"OSWB-EMB1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 23;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(EmbedError::TruncatedFile { offset: self.bytes.len(), needed: n - remaining });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let start = self.pos;
        let raw = self.take(n * 4)?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(i, b)| {
                let v = f32::from_le_bytes(b.try_into().unwrap());
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EmbedError::NonFiniteValue { offset: start + 4 * i })
                }
            })
            .collect()
    }
}

pub fn parse_embedding_file(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(EmbedError::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: MAGIC.len() };
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(EmbedError::UnsupportedVersion(version));
    }
    let count = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    let rows = cur.u16()? as usize;
    let cols = cur.u16()? as usize;
    if dim == 0 {
        return Err(EmbedError::InvalidHeader("dim must be positive".into()));
    }
    if (rows == 0) != (cols == 0) {
        return Err(EmbedError::InvalidHeader(format!("patch shape {rows}x{cols} has exactly one zero side")));
    }

    let mut ids = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let offset = cur.pos;
        let raw = cur.take(len)?;
        let id = std::str::from_utf8(raw).map_err(|_| EmbedError::InvalidId { offset })?;
        ids.push(id.to_owned());
    }

    let cells = rows * cols;
    let per_dim_unit = count
        .checked_mul(1 + cells)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| EmbedError::InvalidHeader("payload size overflows".into()))?;
    let payload = per_dim_unit
        .checked_mul(dim)
        .ok_or_else(|| EmbedError::InvalidHeader("payload size overflows".into()))?;
    let remaining = bytes.len() - cur.pos;
    if remaining < payload {
        // A consistent payload at a smaller width means rows are shorter than the header says.
        if count > 0 && remaining.is_multiple_of(per_dim_unit) {
            return Err(EmbedError::DimMismatch { offset: cur.pos, expected: dim, found: remaining / per_dim_unit });
        }
        return Err(EmbedError::TruncatedFile { offset: bytes.len(), needed: payload - remaining });
    }
    if remaining > payload {
        return Err(EmbedError::TrailingData { offset: cur.pos + payload, count: remaining - payload });
    }

    let vectors = cur.floats(count * dim)?;
    let mut set = EmbeddingSet::new(ids, dim, vectors)?;
    if cells > 0 {
        let grids = cur.floats(count * cells * dim)?;
        set = set.with_patches(rows, cols, grids)?;
    }
    Ok(set)
}

/// Serializes `set` (metadata is not part of the binary file).
pub fn write_embedding_file(set: &EmbeddingSet) -> Vec<u8> {
    let (rows, cols) = set.patch_shape().unwrap_or((0, 0));
    let id_bytes: usize = set.ids().iter().map(|id| 4 + id.len()).sum();
    let floats = set.vectors().len() + set.patch_data().map_or(0, <[f32]>::len);
    let mut out = Vec::with_capacity(HEADER_LEN + id_bytes + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u16).to_le_bytes());
    out.extend_from_slice(&(cols as u16).to_le_bytes());
    for id in set.ids() {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in set.vectors() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(grids) = set.patch_data() {
        for v in grids {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
