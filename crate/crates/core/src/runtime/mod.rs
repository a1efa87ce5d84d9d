//! Code that runs inside every stage function: context initialisation,
//! payload collection, stage execution, shuffling to the next group and the
//! committing sink.

mod arena;
mod cost;
mod retry;
mod ring;
pub mod sink;
mod worker;

pub use arena::{Arena, ArenaEntry, ArenaKey, Collected, EntryStatus};
pub use cost::CostModel;
pub use retry::{backoff_wait, RetryPolicy, BASE_MS, JITTER_MS};
pub use ring::{ring_seed, HashRing, VNODES};
pub use worker::{
    execute_stage, init_context, output_sequence, prepare_data, HandlerStatus, StageFunction,
    WorkerState,
};

use crate::payload::PayloadError;
use crate::planner::PlannerError;
use crate::query::QueryError;
use crate::sim::{HandlerError, SimError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("seq_num {seq_num} outside 1..={seq_len}")]
    SeqOutOfRange { seq_num: u32, seq_len: u32 },
    #[error("seq_len {got} conflicts with {have} already seen for this key")]
    ConflictingSeqLen { have: u32, got: u32 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("uninitialized! {0}")]
    Uninitialized(String),
    #[error("out of memory: {needed} bytes needed, {budget} available")]
    OutOfMemory { needed: usize, budget: usize },
    #[error("gave up invoking {target} after {attempts} throttled attempts")]
    RetriesExhausted { target: String, attempts: u32 },
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<RuntimeError> for HandlerError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Sim(s) => HandlerError::Sim(s),
            RuntimeError::Planner(PlannerError::Store(s)) => HandlerError::Sim(s),
            other => HandlerError::Failed(other.to_string()),
        }
    }
}
