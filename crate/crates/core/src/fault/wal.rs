use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::keys::{commit_key, log_key, parse_wal_key, wal_prefix};
use super::FaultError;
use crate::sim::{ObjectStorage, SimError};

/// Log record of one epoch: where each source starts and ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalEntry {
    pub epoch_id: u64,
    /// Per source, the half-open offset range `[start, end)`.
    pub source_offsets: Vec<(u64, u64)>,
    #[serde(default)]
    pub committed: bool,
}

impl WalEntry {
    pub fn new(epoch_id: u64, source_offsets: Vec<(u64, u64)>) -> Self {
        WalEntry {
            epoch_id,
            source_offsets,
            committed: false,
        }
    }
}

/// What a listing of the log found.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalScan {
    pub logged: BTreeSet<u64>,
    pub committed: BTreeSet<u64>,
}

impl WalScan {
    /// Lowest logged epoch without a commit record.
    pub fn first_uncommitted(&self) -> Option<u64> {
        self.logged.difference(&self.committed).next().copied()
    }

    pub fn last_logged(&self) -> Option<u64> {
        self.logged.last().copied()
    }

    /// Epoch to run next after a restart.
    pub fn resume_epoch(&self) -> u64 {
        self.first_uncommitted()
            .or_else(|| self.committed.last().map(|e| e + 1))
            .unwrap_or(0)
    }
}

pub fn scan_wal(store: &mut dyn ObjectStorage, query_code: &str) -> Result<WalScan, FaultError> {
    let mut scan = WalScan::default();
    for key in store.list(&wal_prefix(query_code))? {
        match parse_wal_key(&key) {
            Some((e, true)) => {
                scan.committed.insert(e);
            }
            Some((e, false)) => {
                scan.logged.insert(e);
            }
            None => {}
        }
    }
    Ok(scan)
}

/// Durably record an epoch before it runs. Re-logging the latest epoch is
/// allowed (a rerun after recovery); logging behind it is not.
pub fn log_epoch(store: &mut dyn ObjectStorage, query_code: &str, entry: &WalEntry) -> Result<(), FaultError> {
    let scan = scan_wal(store, query_code)?;
    if let Some(last) = scan.last_logged() {
        if entry.epoch_id < last {
            return Err(FaultError::OutOfOrder {
                epoch: entry.epoch_id,
                last,
            });
        }
    }
    let mut entry = entry.clone();
    entry.committed = false;
    let bytes = serde_json::to_vec(&entry).expect("wal entry serializes");
    store.put(&log_key(query_code, entry.epoch_id), bytes)?;
    Ok(())
}

pub fn is_committed(store: &mut dyn ObjectStorage, query_code: &str, epoch: u64) -> Result<bool, FaultError> {
    match store.get(&commit_key(query_code, epoch)) {
        Ok(_) => Ok(true),
        Err(SimError::NoSuchKey(_)) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

/// Write the commit marker of a logged epoch.
pub fn commit_epoch(store: &mut dyn ObjectStorage, query_code: &str, epoch: u64) -> Result<(), FaultError> {
    let entry = read_entry(store, query_code, epoch)?;
    if is_committed(store, query_code, epoch)? {
        return Err(FaultError::DoubleCommit(epoch));
    }
    let marker = WalEntry {
        committed: true,
        ..entry
    };
    let bytes = serde_json::to_vec(&marker).expect("wal entry serializes");
    store.put(&commit_key(query_code, epoch), bytes)?;
    Ok(())
}

pub fn read_entry(store: &mut dyn ObjectStorage, query_code: &str, epoch: u64) -> Result<WalEntry, FaultError> {
    let key = log_key(query_code, epoch);
    let bytes = match store.get(&key) {
        Ok(b) => b,
        Err(SimError::NoSuchKey(_)) => return Err(FaultError::UnknownEpoch(epoch)),
        Err(e) => return Err(e.into()),
    };
    serde_json::from_slice(&bytes).map_err(|e| FaultError::Corrupt {
        key,
        reason: e.to_string(),
    })
}

/// Entries of all logged epochs, keyed by epoch.
pub fn read_log(store: &mut dyn ObjectStorage, query_code: &str) -> Result<BTreeMap<u64, WalEntry>, FaultError> {
    let scan = scan_wal(store, query_code)?;
    let mut out = BTreeMap::new();
    for e in scan.logged {
        let mut entry = read_entry(store, query_code, e)?;
        entry.committed = scan.committed.contains(&e);
        out.insert(e, entry);
    }
    Ok(out)
}
