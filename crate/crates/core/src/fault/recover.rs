use serde::de::DeserializeOwned;
use serde::Serialize;

use super::checkpoint::{latest_checkpoint, save_checkpoint};
use super::wal::{is_committed, log_epoch, scan_wal, WalEntry};
use super::FaultError;
use crate::sim::ObjectStorage;

/// A micro-batch job that the recovery driver can run, rerun and replay.
pub trait EpochRunner {
    /// State carried from one epoch to the next.
    type State: Serialize + DeserializeOwned + Default;
    type Error: From<FaultError>;

    /// Storage holding the log, checkpoints and sink.
    fn store(&mut self) -> &mut dyn ObjectStorage;

    /// Source offsets read by `epoch`.
    fn offsets(&self, epoch: u64) -> Vec<(u64, u64)>;

    /// Run `epoch` end to end. Its output must be committed on success.
    fn run_epoch(&mut self, state: &mut Self::State, epoch: u64) -> Result<(), Self::Error>;

    /// Fold a committed epoch into `state` without emitting anything.
    fn replay_epoch(&mut self, state: &mut Self::State, epoch: u64) -> Result<(), Self::Error>;

    /// Emit a committed epoch whose output may not have reached the sink.
    fn ensure_emitted(&mut self, _epoch: u64) -> Result<(), Self::Error> {
        Ok(())
    }
}

/// What the driver found and did when it started.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    /// First epoch run for real.
    pub resume_epoch: u64,
    pub checkpoint: Option<u64>,
    pub replayed: Vec<u64>,
}

/// Run epochs `0..epochs`, resuming from whatever the log says was done.
///
/// State is restored from the newest checkpoint before the first
/// uncommitted epoch and brought forward by replaying the epochs in
/// between. Every epoch is logged before it runs; a checkpoint is written
/// after every `cadence` epochs.
pub fn drive<R: EpochRunner>(
    runner: &mut R,
    query_code: &str,
    epochs: u64,
    cadence: u64,
) -> Result<(R::State, Recovery), R::Error> {
    let scan = scan_wal(runner.store(), query_code)?;
    let resume = scan.resume_epoch();
    for &e in &scan.committed {
        runner.ensure_emitted(e)?;
    }
    let ck = latest_checkpoint::<R::State>(runner.store(), query_code, resume)?;
    let mut recovery = Recovery {
        resume_epoch: resume,
        checkpoint: ck.as_ref().map(|c| c.epoch_id),
        replayed: Vec::new(),
    };
    let (mut state, from) = match ck {
        Some(c) => (c.state, c.epoch_id + 1),
        None => (R::State::default(), 0),
    };
    for e in from..resume.min(epochs) {
        runner.replay_epoch(&mut state, e)?;
        recovery.replayed.push(e);
    }
    for e in resume..epochs {
        let entry = WalEntry::new(e, runner.offsets(e));
        log_epoch(runner.store(), query_code, &entry)?;
        runner.run_epoch(&mut state, e)?;
        if !is_committed(runner.store(), query_code, e)? {
            return Err(FaultError::NotCommitted(e).into());
        }
        if cadence > 0 && (e + 1) % cadence == 0 {
            save_checkpoint(runner.store(), query_code, e, &state)?;
        }
    }
    Ok((state, recovery))
}
