use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::keys::{checkpoint_key, checkpoint_prefix};
use super::FaultError;
use crate::sim::{ObjectStorage, SimError};

/// State after every epoch up to and including `epoch_id` was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCheckpoint<S> {
    pub epoch_id: u64,
    pub state: S,
}

/// Store a checkpoint; writing the same epoch again overwrites it.
pub fn save_checkpoint<S: Serialize>(
    store: &mut dyn ObjectStorage,
    query_code: &str,
    epoch_id: u64,
    state: &S,
) -> Result<(), FaultError> {
    let bytes = serde_json::to_vec(&StateCheckpoint { epoch_id, state }).map_err(|e| {
        FaultError::Corrupt {
            key: checkpoint_key(query_code, epoch_id),
            reason: e.to_string(),
        }
    })?;
    store.put(&checkpoint_key(query_code, epoch_id), bytes)?;
    Ok(())
}

pub fn load_checkpoint<S: DeserializeOwned>(
    store: &mut dyn ObjectStorage,
    query_code: &str,
    epoch_id: u64,
) -> Result<Option<StateCheckpoint<S>>, FaultError> {
    let key = checkpoint_key(query_code, epoch_id);
    let bytes = match store.get(&key) {
        Ok(b) => b,
        Err(SimError::NoSuchKey(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| FaultError::Corrupt {
            key,
            reason: e.to_string(),
        })
}

/// Newest checkpoint whose epoch is before `before`.
pub fn latest_checkpoint<S: DeserializeOwned>(
    store: &mut dyn ObjectStorage,
    query_code: &str,
    before: u64,
) -> Result<Option<StateCheckpoint<S>>, FaultError> {
    let newest = store
        .list(&checkpoint_prefix(query_code))?
        .iter()
        .filter_map(|k| k.rsplit('/').next()?.parse::<u64>().ok())
        .filter(|&e| e < before)
        .max();
    match newest {
        Some(e) => load_checkpoint(store, query_code, e),
        None => Ok(None),
    }
}
