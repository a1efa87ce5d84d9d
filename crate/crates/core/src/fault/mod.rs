//! Write-ahead epoch log, state checkpoints and the recovery procedure.
//!
//! Every epoch is logged with its source offsets before it runs and
//! committed by the sink once its output is durable. After a crash the
//! driver resumes at the first uncommitted epoch, rebuilding state from the
//! newest checkpoint by replaying the epochs in between.

mod checkpoint;
pub mod keys;
mod recover;
mod source;
mod wal;

pub use checkpoint::{latest_checkpoint, load_checkpoint, save_checkpoint, StateCheckpoint};
pub use recover::{drive, EpochRunner, Recovery};
pub use source::{EventLog, ReplayableSource};
pub use wal::{commit_epoch, is_committed, log_epoch, read_entry, read_log, scan_wal, WalEntry, WalScan};

use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FaultError {
    #[error("epoch {epoch} logged after epoch {last}")]
    OutOfOrder { epoch: u64, last: u64 },
    #[error("epoch {0} is already committed")]
    DoubleCommit(u64),
    #[error("epoch {0} was never logged")]
    UnknownEpoch(u64),
    #[error("epoch {0} finished without a commit record")]
    NotCommitted(u64),
    #[error("source range {start}..{end} is not available (log holds {len} events)")]
    SourceRange { start: u64, end: u64, len: u64 },
    #[error("unrecoverable: {0}")]
    Unrecoverable(String),
    #[error("corrupt object {key}: {reason}")]
    Corrupt { key: String, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}
