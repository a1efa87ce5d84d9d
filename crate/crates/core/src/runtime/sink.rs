use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::fault::keys::{commit_key, result_key, sink_part_key, sink_prefix};
use crate::payload::{decode_payload, encode_payload, Codec, PayloadMeta, Qid, Uuid};
use crate::query::{RecordBatch, SchemaRef, WindowSpec};
use crate::sim::{ObjectStorage, SimError};

/// Name of the window an epoch produces, used in sink keys.
pub fn window_label(window: Option<&WindowSpec>, epoch: u64) -> String {
    match window.and_then(|w| w.epoch_window(epoch)) {
        Some(w) => w.to_string(),
        None => format!("epoch{epoch}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMarker {
    pub epoch_id: u64,
    pub window: String,
    pub parts: u32,
}

pub enum SinkOutcome {
    /// Other parts are still missing.
    Partial,
    /// This write completed the window; it is committed and emitted.
    Committed,
}

/// Write one part of a window's result. The writer that finds every part
/// present records the commit marker, then emits the consolidated result.
#[allow(clippy::too_many_arguments)]
pub fn write_part(
    store: &mut dyn ObjectStorage,
    qid: &Qid,
    epoch: u64,
    window: &str,
    part: u32,
    parts: u32,
    batch: &RecordBatch,
    codec: Codec,
) -> Result<SinkOutcome, RuntimeError> {
    let qc = &qid.query_code;
    let meta = PayloadMeta::new(Uuid::new(qid.clone(), part, parts)?, epoch, 1);
    let bytes = encode_payload(batch.schema(), std::slice::from_ref(batch), &meta, codec)?;
    store.put(&sink_part_key(qc, window, part), bytes)?;
    let present = store.list(&sink_prefix(qc, window))?;
    if (present.len() as u32) < parts {
        return Ok(SinkOutcome::Partial);
    }
    commit_if_absent(store, qc, epoch, window, parts)?;
    emit(store, qc, window, batch.schema(), codec)?;
    Ok(SinkOutcome::Committed)
}

fn commit_if_absent(
    store: &mut dyn ObjectStorage,
    qc: &str,
    epoch: u64,
    window: &str,
    parts: u32,
) -> Result<(), RuntimeError> {
    let key = commit_key(qc, epoch);
    match store.get(&key) {
        Ok(_) => Ok(()),
        Err(SimError::NoSuchKey(_)) => {
            let marker = CommitMarker {
                epoch_id: epoch,
                window: window.to_string(),
                parts,
            };
            let bytes = serde_json::to_vec(&marker).expect("marker serializes");
            store.put(&key, bytes)?;
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

/// Concatenate every part of a window, in part order, into its result object.
pub fn emit(
    store: &mut dyn ObjectStorage,
    qc: &str,
    window: &str,
    schema: &SchemaRef,
    codec: Codec,
) -> Result<RecordBatch, RuntimeError> {
    let mut batches = Vec::new();
    let mut qid = None;
    for key in store.list(&sink_prefix(qc, window))? {
        let (bs, meta) = decode_payload(&store.get(&key)?)?;
        qid.get_or_insert(meta.uuid.qid);
        batches.extend(bs);
    }
    let all = RecordBatch::concat(schema, &batches)?;
    let qid = qid.ok_or_else(|| RuntimeError::Protocol(format!("window {window} has no parts")))?;
    let meta = PayloadMeta::new(Uuid::new(qid, 1, 1)?, 0, 1);
    let bytes = encode_payload(schema, std::slice::from_ref(&all), &meta, codec)?;
    store.put(&result_key(qc, window), bytes)?;
    Ok(all)
}

/// Re-emit a committed window from its parts; used when recovery finds a
/// commit marker without a result.
pub fn re_emit(
    store: &mut dyn ObjectStorage,
    qc: &str,
    window: &str,
    schema: &crate::query::Schema,
    codec: Codec,
) -> Result<RecordBatch, RuntimeError> {
    emit(store, qc, window, &Arc::new(schema.clone()), codec)
}
