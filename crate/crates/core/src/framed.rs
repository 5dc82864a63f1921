//! Framed binary matrix format shared by feature vectors and embeddings.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"VXFM"            magic
//! u16                version (1)
//! u32                number of metadata entries
//!   u32 len, bytes   key (UTF-8)      } repeated
//!   u32 len, bytes   value (UTF-8)    }
//! u64                rows
//! u64                cols
//! f64 * rows * cols  values, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"VXFM";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FramedError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("metadata is not valid UTF-8")]
    BadMetadata,
    #[error("payload holds {got} bytes, header declares {rows} x {cols}")]
    Truncated { rows: u64, cols: u64, got: usize },
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FramedMatrix {
    pub meta: BTreeMap<String, String>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl FramedMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

pub fn encode(m: &FramedMatrix) -> Vec<u8> {
    assert_eq!(m.values.len(), m.rows * m.cols, "framed matrix shape");
    let mut out = Vec::with_capacity(32 + 8 * m.values.len());
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((m.meta.len() as u32).to_le_bytes());
    for (k, v) in &m.meta {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    out.extend((m.rows as u64).to_le_bytes());
    out.extend((m.cols as u64).to_le_bytes());
    for v in &m.values {
        out.extend(v.to_le_bytes());
    }
    out
}

pub fn write(mut w: impl Write, m: &FramedMatrix) -> Result<(), FramedError> {
    w.write_all(&encode(m))?;
    Ok(())
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], FramedError> {
    if buf.len() < n {
        return Err(FramedError::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "framed header cut short",
        )));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32, FramedError> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().unwrap()))
}

fn take_u64(buf: &mut &[u8]) -> Result<u64, FramedError> {
    Ok(u64::from_le_bytes(take(buf, 8)?.try_into().unwrap()))
}

fn take_str(buf: &mut &[u8]) -> Result<String, FramedError> {
    let n = take_u32(buf)? as usize;
    String::from_utf8(take(buf, n)?.to_vec()).map_err(|_| FramedError::BadMetadata)
}

pub fn decode(mut buf: &[u8]) -> Result<FramedMatrix, FramedError> {
    let magic: [u8; 4] = take(&mut buf, 4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(FramedError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(take(&mut buf, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(FramedError::UnsupportedVersion(version));
    }
    let n_meta = take_u32(&mut buf)?;
    let mut meta = BTreeMap::new();
    for _ in 0..n_meta {
        let k = take_str(&mut buf)?;
        let v = take_str(&mut buf)?;
        meta.insert(k, v);
    }
    let rows = take_u64(&mut buf)?;
    let cols = take_u64(&mut buf)?;
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n <= buf.len() as u64)
        .ok_or(FramedError::Truncated {
            rows,
            cols,
            got: buf.len(),
        })? as usize;
    if buf.len() > want {
        return Err(FramedError::TrailingBytes);
    }
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FramedMatrix {
        meta,
        rows: rows as usize,
        cols: cols as usize,
        values,
    })
}

pub fn read(mut r: impl Read) -> Result<FramedMatrix, FramedError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

/// True when the bytes start with the framed magic.
pub fn is_framed(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}
