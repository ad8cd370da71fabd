//! Framing shared by the checkpoint and dataset files.
//!
//! Layout: 8 magic bytes, a `u32` little-endian byte length, that many bytes
//! of UTF-8 JSON, the payload as little-endian `f64`s, and the CRC32
//! (IEEE) of the payload bytes as a little-endian `u32`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("file truncated: {0}")]
    Truncated(&'static str),
    #[error("header is not valid UTF-8 JSON: {0}")]
    BadHeader(String),
    #[error("payload checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("payload length {0} is not a multiple of 8 bytes")]
    Misaligned(usize),
}

pub fn encode(magic: &[u8; 8], header: &[u8], payload: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 + header.len() + payload.len() * 8 + 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    let start = out.len();
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Splits a frame into its JSON header bytes and `f64` payload.
pub fn decode<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(&'a [u8], Vec<f64>), FrameError> {
    if bytes.len() < 8 {
        return Err(FrameError::Truncated("magic"));
    }
    if &bytes[..8] != magic {
        return Err(FrameError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    if bytes.len() < 12 {
        return Err(FrameError::Truncated("header length"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let hend = 12usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or(FrameError::Truncated("header"))?;
    let header = &bytes[12..hend];
    std::str::from_utf8(header).map_err(|e| FrameError::BadHeader(e.to_string()))?;
    if bytes.len() < hend + 4 {
        return Err(FrameError::Truncated("checksum"));
    }
    let pend = bytes.len() - 4;
    let payload = &bytes[hend..pend];
    if payload.len() % 8 != 0 {
        return Err(FrameError::Misaligned(payload.len()));
    }
    let stored = u32::from_le_bytes(bytes[pend..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FrameError::Checksum { stored, computed });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}
