use std::fmt;

use serde::{Deserialize, Serialize};

use super::PayloadError;

/// Compression applied to payload data and cloud contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Codec {
    None,
    #[default]
    Zstd,
    Lz4,
    Snappy,
}

pub const ZSTD_LEVEL: i32 = 3;

impl Codec {
    pub const ALL: [Codec; 4] = [Codec::None, Codec::Zstd, Codec::Lz4, Codec::Snappy];

    pub fn id(self) -> u8 {
        match self {
            Codec::None => 0,
            Codec::Zstd => 1,
            Codec::Lz4 => 2,
            Codec::Snappy => 3,
        }
    }

    pub fn from_id(id: u8) -> Result<Self, PayloadError> {
        match id {
            0 => Ok(Codec::None),
            1 => Ok(Codec::Zstd),
            2 => Ok(Codec::Lz4),
            3 => Ok(Codec::Snappy),
            other => Err(PayloadError::UnknownCodec(other)),
        }
    }

    pub fn compress(self, raw: &[u8]) -> Result<Vec<u8>, PayloadError> {
        match self {
            Codec::None => Ok(raw.to_vec()),
            Codec::Zstd => zstd::bulk::compress(raw, ZSTD_LEVEL)
                .map_err(|e| PayloadError::Codec(format!("zstd: {e}"))),
            Codec::Lz4 => Ok(lz4_flex::block::compress(raw)),
            Codec::Snappy => snap::raw::Encoder::new()
                .compress_vec(raw)
                .map_err(|e| PayloadError::Codec(format!("snappy: {e}"))),
        }
    }

    /// Decompress into exactly `raw_len` bytes.
    pub fn decompress(self, compressed: &[u8], raw_len: usize) -> Result<Vec<u8>, PayloadError> {
        let out = match self {
            Codec::None => compressed.to_vec(),
            Codec::Zstd => zstd::bulk::decompress(compressed, raw_len)
                .map_err(|e| PayloadError::Codec(format!("zstd: {e}")))?,
            Codec::Lz4 => lz4_flex::block::decompress(compressed, raw_len)
                .map_err(|e| PayloadError::Codec(format!("lz4: {e}")))?,
            Codec::Snappy => snap::raw::Decoder::new()
                .decompress_vec(compressed)
                .map_err(|e| PayloadError::Codec(format!("snappy: {e}")))?,
        };
        if out.len() != raw_len {
            return Err(PayloadError::SizeMismatch {
                declared: raw_len,
                actual: out.len(),
            });
        }
        Ok(out)
    }
}

impl TryFrom<u8> for Codec {
    type Error = PayloadError;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Codec::from_id(id)
    }
}

impl From<Codec> for u8 {
    fn from(c: Codec) -> u8 {
        c.id()
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Codec::None => "none",
            Codec::Zstd => "zstd",
            Codec::Lz4 => "lz4",
            Codec::Snappy => "snappy",
        })
    }
}

/// Frame: `u64` little-endian raw length, then the compressed block.
pub fn frame(codec: Codec, raw: &[u8]) -> Result<Vec<u8>, PayloadError> {
    let body = codec.compress(raw)?;
    let mut out = Vec::with_capacity(8 + body.len());
    out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Largest raw length a frame may declare; guards allocation on corrupt input.
const MAX_RAW_LEN: u64 = 1 << 34;

pub fn unframe(codec: Codec, framed: &[u8]) -> Result<Vec<u8>, PayloadError> {
    if framed.len() < 8 {
        return Err(PayloadError::Corrupt("frame shorter than its length header".into()));
    }
    let (len, body) = framed.split_at(8);
    let raw_len = u64::from_le_bytes(len.try_into().expect("8 bytes"));
    if raw_len > MAX_RAW_LEN {
        return Err(PayloadError::Corrupt(format!("implausible frame length {raw_len}")));
    }
    codec.decompress(body, raw_len as usize)
}
