use super::envelope::{encode_payload, Fragment, PayloadMeta, Uuid};
use super::{Codec, InvocationMode, PayloadError};
use crate::query::{RecordBatch, SchemaRef};

/// Fraction of the cap the greedy packer aims for before the exact check.
const TARGET: f64 = 0.9;

pub fn check_cap(bytes: &[u8], mode: InvocationMode) -> Result<(), PayloadError> {
    if bytes.len() > mode.cap() {
        return Err(PayloadError::OverCap {
            size: bytes.len(),
            cap: mode.cap(),
        });
    }
    Ok(())
}

/// Encodes rows as piece `seq` of `len`.
type Encoder<'a> = dyn Fn(&RecordBatch, u32, u32) -> Result<Vec<u8>, PayloadError> + 'a;

/// Cut the rows into contiguous ranges whose envelopes fit under `cap`.
/// `encode(range, seq, pieces)` renders a candidate; while sizing, `seq` and
/// `pieces` are a same-width placeholder.
fn pack_ranges(
    batch: &RecordBatch,
    cap: usize,
    encode: &Encoder<'_>,
) -> Result<Vec<(usize, usize)>, PayloadError> {
    let n = batch.num_rows();
    let whole = encode(batch, 1, 1)?;
    if whole.len() <= cap {
        return Ok(vec![(0, n)]);
    }
    let target = (cap as f64 * TARGET) as usize;
    let overhead = encode(&batch.slice(0, 0), 1, 1)?.len();
    let budget = target.saturating_sub(overhead).max(1);
    let per_row = (whole.len().saturating_sub(overhead)).max(1) as f64 / n as f64;
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut offset = 0;
    let placeholder = u32::MAX;
    while offset < n {
        let remaining = n - offset;
        let mut k = ((budget as f64 / per_row) as usize).clamp(1, remaining);
        loop {
            let size = encode(&batch.slice(offset, k), placeholder, placeholder)?.len();
            if size <= target || (k == 1 && size <= cap) {
                break;
            }
            if k == 1 {
                return Err(PayloadError::RowTooLarge { size, cap });
            }
            let shrink = (k as f64 * target as f64 / size as f64) as usize;
            k = shrink.clamp(1, k - 1);
        }
        ranges.push((offset, k));
        offset += k;
    }
    Ok(ranges)
}

fn pack(
    batch: &RecordBatch,
    cap: usize,
    encode: &Encoder<'_>,
) -> Result<Vec<Vec<u8>>, PayloadError> {
    let ranges = pack_ranges(batch, cap, encode)?;
    let count = ranges.len() as u32;
    ranges
        .iter()
        .enumerate()
        .map(|(i, &(off, k))| {
            let bytes = encode(&batch.slice(off, k), i as u32 + 1, count)?;
            if bytes.len() > cap {
                return Err(PayloadError::OverCap {
                    size: bytes.len(),
                    cap,
                });
            }
            Ok(bytes)
        })
        .collect()
}

/// Row chunks that each fit under the cap of `mode` whatever sequence
/// numbers they are later given. For callers that number pieces across
/// several splits.
pub fn split_rows(
    schema: &SchemaRef,
    batches: &[RecordBatch],
    meta: &PayloadMeta,
    mode: InvocationMode,
    codec: Codec,
) -> Result<Vec<RecordBatch>, PayloadError> {
    let all = concat_all(schema, batches)?;
    let ranges = pack_ranges(&all, mode.cap(), &|b, _, _| {
        let mut m = meta.clone();
        m.uuid.seq_num = u32::MAX;
        m.uuid.seq_len = u32::MAX;
        encode_payload(schema, std::slice::from_ref(b), &m, codec)
    })?;
    Ok(ranges.into_iter().map(|(off, k)| all.slice(off, k)).collect())
}

fn concat_all(schema: &SchemaRef, batches: &[RecordBatch]) -> Result<RecordBatch, PayloadError> {
    for b in batches {
        if b.schema().fields() != schema.fields() {
            return Err(PayloadError::MixedSchemas);
        }
    }
    Ok(RecordBatch::concat(schema, batches)?)
}

/// Split batches into envelopes that each fit under the cap of `mode`.
/// Pieces get consecutive `seq_num` starting at 1 and a shared `seq_len`;
/// the `seq_num`/`seq_len` in `meta_base` are replaced. Rows keep their order.
pub fn split_for_invocation(
    schema: &SchemaRef,
    batches: &[RecordBatch],
    meta_base: &PayloadMeta,
    mode: InvocationMode,
    codec: Codec,
) -> Result<Vec<Vec<u8>>, PayloadError> {
    let all = concat_all(schema, batches)?;
    pack(&all, mode.cap(), &|b, seq, len| {
        let mut meta = meta_base.clone();
        meta.uuid = Uuid {
            qid: meta_base.uuid.qid.clone(),
            seq_num: seq,
            seq_len: len,
        };
        encode_payload(schema, std::slice::from_ref(b), &meta, codec)
    })
}

/// Like [`split_for_invocation`], but keeps the uuid of `meta` and numbers the
/// pieces through the `fragment` field instead. A payload that already fits
/// is returned whole, without a fragment.
pub fn split_fragments(
    schema: &SchemaRef,
    batches: &[RecordBatch],
    meta: &PayloadMeta,
    mode: InvocationMode,
    codec: Codec,
) -> Result<Vec<Vec<u8>>, PayloadError> {
    let all = concat_all(schema, batches)?;
    pack(&all, mode.cap(), &|b, index, count| {
        let mut m = meta.clone();
        m.fragment = (count > 1).then_some(Fragment { index, count });
        encode_payload(schema, std::slice::from_ref(b), &m, codec)
    })
}
