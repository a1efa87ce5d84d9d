use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::codec::{frame, unframe, Codec};
use super::PayloadError;
use crate::query::{Column, RecordBatch, Schema, SchemaRef};

/// Query instance identifier `<Query Code>-<Job ID>-<Query Timestamp>`.
///
/// The query code is shared with the function names; job id and launch
/// timestamp separate micro-batch jobs and query launches.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qid {
    pub query_code: String,
    pub job_id: String,
    pub query_timestamp: i64,
}

impl Qid {
    pub fn new(
        query_code: impl Into<String>,
        job_id: impl Into<String>,
        query_timestamp: i64,
    ) -> Result<Self, PayloadError> {
        let qid = Qid {
            query_code: query_code.into(),
            job_id: job_id.into(),
            query_timestamp,
        };
        let ok_part = |s: &str| !s.is_empty() && !s.contains('-');
        if !ok_part(&qid.query_code) || !ok_part(&qid.job_id) || query_timestamp < 0 {
            return Err(PayloadError::InvalidQid(qid.to_string()));
        }
        Ok(qid)
    }
}

impl fmt::Display for Qid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.query_code, self.job_id, self.query_timestamp)
    }
}

impl FromStr for Qid {
    type Err = PayloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, '-');
        let (Some(code), Some(job), Some(ts)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(PayloadError::InvalidQid(s.to_string()));
        };
        let ts = ts
            .parse::<i64>()
            .map_err(|_| PayloadError::InvalidQid(s.to_string()))?;
        Qid::new(code, job, ts)
    }
}

impl Serialize for Qid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Qid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `{ QID, SEQ_NUM, SEQ_LEN }` with `1 <= seq_num <= seq_len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Uuid {
    pub qid: Qid,
    pub seq_num: u32,
    pub seq_len: u32,
}

impl Uuid {
    pub fn new(qid: Qid, seq_num: u32, seq_len: u32) -> Result<Self, PayloadError> {
        if seq_num == 0 || seq_num > seq_len {
            return Err(PayloadError::InvalidSequence { seq_num, seq_len });
        }
        Ok(Uuid {
            qid,
            seq_num,
            seq_len,
        })
    }
}

/// Position of one piece when a single logical payload had to be cut to fit
/// under an invocation cap. Absent on unsplit payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fragment {
    pub index: u32,
    pub count: u32,
}

/// Routing and assembly metadata carried by every payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PayloadMeta {
    pub uuid: Uuid,
    pub epoch_id: u64,
    pub shuffle_id: u32,
    pub fragment: Option<Fragment>,
}

impl PayloadMeta {
    pub fn new(uuid: Uuid, epoch_id: u64, shuffle_id: u32) -> Self {
        PayloadMeta {
            uuid,
            epoch_id,
            shuffle_id,
            fragment: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    uuid: Uuid,
    epoch_id: u64,
    shuffle_id: u32,
    schema: Schema,
    data: String,
    encoding: Codec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fragment: Option<Fragment>,
}

/// A parsed envelope whose data has not been decompressed yet.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub meta: PayloadMeta,
    pub schema: SchemaRef,
    pub encoding: Codec,
    data: Vec<u8>,
}

impl Payload {
    /// Parse envelope metadata; the column data stays compressed until
    /// [`Payload::decode_batches`].
    pub fn parse(bytes: &[u8]) -> Result<Self, PayloadError> {
        let env: Envelope =
            serde_json::from_slice(bytes).map_err(|e| PayloadError::Corrupt(e.to_string()))?;
        if env.shuffle_id == 0 {
            return Err(PayloadError::Corrupt("shuffle_id must be at least 1".into()));
        }
        Uuid::new(env.uuid.qid.clone(), env.uuid.seq_num, env.uuid.seq_len)?;
        if let Some(f) = env.fragment {
            if f.index == 0 || f.index > f.count {
                return Err(PayloadError::Corrupt(format!(
                    "fragment {}/{} out of range",
                    f.index, f.count
                )));
            }
        }
        let data = base64::engine::general_purpose::STANDARD
            .decode(env.data.as_bytes())
            .map_err(|e| PayloadError::Corrupt(format!("data is not base64: {e}")))?;
        Ok(Payload {
            meta: PayloadMeta {
                uuid: env.uuid,
                epoch_id: env.epoch_id,
                shuffle_id: env.shuffle_id,
                fragment: env.fragment,
            },
            schema: Arc::new(env.schema),
            encoding: env.encoding,
            data,
        })
    }

    /// Compressed data size in bytes.
    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    pub fn decode_batches(&self) -> Result<Vec<RecordBatch>, PayloadError> {
        let raw = unframe(self.encoding, &self.data)?;
        let blocks: Vec<Vec<Column>> =
            bincode::deserialize(&raw).map_err(|e| PayloadError::Corrupt(e.to_string()))?;
        blocks
            .into_iter()
            .map(|cols| {
                if cols.len() != self.schema.len() {
                    return Err(PayloadError::Corrupt(
                        "column count differs from envelope schema".into(),
                    ));
                }
                if cols.is_empty() {
                    return Ok(RecordBatch::new_empty(self.schema.clone()));
                }
                RecordBatch::try_new(self.schema.clone(), cols).map_err(PayloadError::from)
            })
            .collect()
    }
}

/// Serialize batches into a text envelope with fields
/// `uuid, epoch_id, shuffle_id, schema, data, encoding`. Column data is a
/// length-prefixed compressed block carried as base64.
pub fn encode_payload(
    schema: &SchemaRef,
    batches: &[RecordBatch],
    meta: &PayloadMeta,
    codec: Codec,
) -> Result<Vec<u8>, PayloadError> {
    for b in batches {
        if b.schema().fields() != schema.fields() {
            return Err(PayloadError::MixedSchemas);
        }
    }
    let blocks: Vec<&[Column]> = batches
        .iter()
        .filter(|b| b.num_rows() > 0)
        .map(|b| b.columns())
        .collect();
    let raw = bincode::serialize(&blocks).map_err(|e| PayloadError::Codec(e.to_string()))?;
    let data = frame(codec, &raw)?;
    let env = Envelope {
        uuid: meta.uuid.clone(),
        epoch_id: meta.epoch_id,
        shuffle_id: meta.shuffle_id,
        schema: (**schema).clone(),
        data: base64::engine::general_purpose::STANDARD.encode(data),
        encoding: codec,
        fragment: meta.fragment,
    };
    serde_json::to_vec(&env).map_err(|e| PayloadError::Codec(e.to_string()))
}

pub fn decode_payload(bytes: &[u8]) -> Result<(Vec<RecordBatch>, PayloadMeta), PayloadError> {
    let p = Payload::parse(bytes)?;
    let batches = p.decode_batches()?;
    Ok((batches, p.meta))
}
