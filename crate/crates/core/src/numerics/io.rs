//! Binary matrix files, CSV tables, and JSON sidecars.
//!
//! Matrix file layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"LCONVMAT"
//! 8       4     version (u32) = 1
//! 12      8     rows (u64)
//! 20      8     cols (u64)
//! 28      8·r·c payload: IEEE-754 f64, little-endian, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LCONVMAT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixFileHeader {
    pub version: u32,
    pub rows: u64,
    pub cols: u64,
}

pub fn encode_matrix(m: &Matrix) -> Result<Vec<u8>> {
    m.ensure_finite("matrix write")?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    Ok(buf)
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(Error::Format {
            offset: bytes.len() as u64,
            reason: "truncated header".into(),
        })
}

fn read_u64(bytes: &[u8], offset: usize) -> Result<u64> {
    bytes
        .get(offset..offset + 8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .ok_or(Error::Format {
            offset: bytes.len() as u64,
            reason: "truncated header".into(),
        })
}

pub fn decode_header(bytes: &[u8]) -> Result<MatrixFileHeader> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: "truncated magic".into(),
        });
    }
    if let Some(i) = (0..MAGIC.len()).find(|&i| bytes[i] != MAGIC[i]) {
        return Err(Error::Format {
            offset: i as u64,
            reason: "bad magic (expected LCONVMAT)".into(),
        });
    }
    let version = read_u32(bytes, 8)?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 8,
            reason: format!("unsupported version {version}"),
        });
    }
    let rows = read_u64(bytes, 12)?;
    let cols = read_u64(bytes, 20)?;
    Ok(MatrixFileHeader {
        version,
        rows,
        cols,
    })
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let h = decode_header(bytes)?;
    let n = h
        .rows
        .checked_mul(h.cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or(Error::Format {
            offset: 12,
            reason: "shape overflows".into(),
        })?;
    let expected = HEADER_LEN as u64 + n;
    if (bytes.len() as u64) < expected {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated payload: expected {expected} bytes"),
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::Format {
            offset: expected,
            reason: "trailing bytes after payload".into(),
        });
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::Format {
            offset: (HEADER_LEN + 8 * i) as u64,
            reason: "non-finite entry".into(),
        });
    }
    Matrix::from_vec(h.rows as usize, h.cols as usize, data)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes an RFC-4180 CSV table. Floats are formatted with Rust's shortest
/// round-trip representation, which always uses '.' as decimal separator.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:?}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn ensure_dir(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
