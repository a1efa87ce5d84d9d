use std::collections::BTreeMap;

use super::RuntimeError;
use crate::payload::{Payload, Qid};
use crate::query::RecordBatch;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArenaKey {
    pub qid: Qid,
    pub shuffle_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryStatus {
    NotReady,
    Ready,
    Processed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArenaEntry {
    pub seq_len: u32,
    pub epoch_id: u64,
    bitmap: Vec<bool>,
    /// Raw payloads per seq_num; several when the sender had to fragment.
    payloads: BTreeMap<u32, Vec<Option<Payload>>>,
    pub status: EntryStatus,
}

impl ArenaEntry {
    fn new(seq_len: u32, epoch_id: u64) -> Self {
        ArenaEntry {
            seq_len,
            epoch_id,
            bitmap: vec![false; seq_len as usize],
            payloads: BTreeMap::new(),
            status: EntryStatus::NotReady,
        }
    }

    pub fn received(&self) -> usize {
        self.bitmap.iter().filter(|b| **b).count()
    }

    pub fn has(&self, seq_num: u32) -> bool {
        self.bitmap[seq_num as usize - 1]
    }
}

/// Outcome of offering a payload to the arena.
#[derive(Debug, Clone, PartialEq)]
pub enum Collected {
    NotReady,
    /// Every payload for the key is in; batches in seq order.
    Ready(Vec<RecordBatch>),
    /// The key was already processed; nothing to do.
    Processed,
}

/// Instance-global collection buffer for shuffled payloads.
///
/// Entries are keyed by `(qid, shuffle_id)`; a bitmap over `seq_num` makes
/// re-delivered payloads no-ops. Data stays compressed until the last
/// payload for a key arrives. Processed entries are kept, without their
/// payloads, so late duplicates are recognised.
#[derive(Debug, Default)]
pub struct Arena {
    entries: BTreeMap<ArenaKey, ArenaEntry>,
}

impl Arena {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &ArenaKey) -> Option<&ArenaEntry> {
        self.entries.get(key)
    }

    /// Payloads held, counted over all entries.
    pub fn pending_payloads(&self) -> usize {
        self.entries
            .values()
            .flat_map(|e| e.payloads.values())
            .map(|frags| frags.iter().flatten().count())
            .sum()
    }

    pub fn collect(&mut self, payload: Payload) -> Result<Collected, RuntimeError> {
        let meta = &payload.meta;
        let (seq_num, seq_len) = (meta.uuid.seq_num, meta.uuid.seq_len);
        let key = ArenaKey {
            qid: meta.uuid.qid.clone(),
            shuffle_id: meta.shuffle_id,
        };
        if seq_num == 0 || seq_num > seq_len {
            return Err(RuntimeError::SeqOutOfRange { seq_num, seq_len });
        }
        let entry = self
            .entries
            .entry(key)
            .or_insert_with(|| ArenaEntry::new(seq_len, meta.epoch_id));
        if entry.seq_len != seq_len {
            return Err(RuntimeError::ConflictingSeqLen {
                have: entry.seq_len,
                got: seq_len,
            });
        }
        if entry.status == EntryStatus::Processed {
            return Ok(Collected::Processed);
        }
        if entry.has(seq_num) {
            return Ok(Collected::NotReady);
        }
        let (index, count) = match meta.fragment {
            Some(f) => (f.index as usize - 1, f.count as usize),
            None => (0, 1),
        };
        let slots = entry
            .payloads
            .entry(seq_num)
            .or_insert_with(|| vec![None; count]);
        if slots.len() != count {
            return Err(RuntimeError::Protocol(format!(
                "seq {seq_num} announced {} fragments, now {count}",
                slots.len()
            )));
        }
        if slots[index].is_none() {
            slots[index] = Some(payload);
        }
        if slots.iter().all(Option::is_some) {
            entry.bitmap[seq_num as usize - 1] = true;
        }
        if entry.received() < entry.seq_len as usize {
            return Ok(Collected::NotReady);
        }
        entry.status = EntryStatus::Ready;
        let payloads = std::mem::take(&mut entry.payloads);
        entry.status = EntryStatus::Processed;
        let mut out = Vec::new();
        for p in payloads.into_values().flatten().flatten() {
            out.extend(p.decode_batches()?);
        }
        Ok(Collected::Ready(out))
    }

    /// Drop processed entries of epochs before `epoch`.
    pub fn evict_before(&mut self, epoch: u64) {
        self.entries
            .retain(|_, e| e.status != EntryStatus::Processed || e.epoch_id >= epoch);
    }
}
