//! Wire format between functions: the payload envelope, compression and
//! cap-aware splitting.

mod codec;
mod envelope;
mod split;

pub use codec::{frame, unframe, Codec, ZSTD_LEVEL};
pub use envelope::{decode_payload, encode_payload, Fragment, Payload, PayloadMeta, Qid, Uuid};
pub use split::{check_cap, split_for_invocation, split_fragments, split_rows};

use crate::query::QueryError;

/// Sync request bodies are limited to 6 MiB.
pub const SYNC_CAP: usize = 6 * (1 << 20);
/// Async event bodies are limited to 256 KiB.
pub const ASYNC_CAP: usize = 256 * (1 << 10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum InvocationMode {
    Sync,
    Async,
}

impl InvocationMode {
    pub fn cap(self) -> usize {
        match self {
            InvocationMode::Sync => SYNC_CAP,
            InvocationMode::Async => ASYNC_CAP,
        }
    }
}

impl std::fmt::Display for InvocationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InvocationMode::Sync => "sync",
            InvocationMode::Async => "async",
        })
    }
}

impl std::str::FromStr for InvocationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(InvocationMode::Sync),
            "async" => Ok(InvocationMode::Async),
            other => Err(format!("unknown invocation mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("unknown codec id {0}")]
    UnknownCodec(u8),
    #[error("codec failure: {0}")]
    Codec(String),
    #[error("decoded size {actual} differs from declared {declared}")]
    SizeMismatch { declared: usize, actual: usize },
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("invalid qid {0:?}")]
    InvalidQid(String),
    #[error("invalid sequence {seq_num}/{seq_len}")]
    InvalidSequence { seq_num: u32, seq_len: u32 },
    #[error("batches do not share one schema")]
    MixedSchemas,
    #[error("payload of {size} bytes exceeds the {cap} byte cap")]
    OverCap { size: usize, cap: usize },
    #[error("a single row needs {size} bytes, over the {cap} byte cap")]
    RowTooLarge { size: usize, cap: usize },
    #[error(transparent)]
    Query(#[from] QueryError),
}
