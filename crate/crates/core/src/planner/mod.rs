//! Physical plans, their division into stages, and per-function contexts.

mod builder;
mod context;
mod plan;
mod stages;

pub use builder::PlanBuilder;
pub use context::{
    decode_context, decode_context_bytes, encode_context, query_code, stage_contexts, CloudContext,
    EnvEncoding, FunctionGroup, FunctionName, CONTEXT_VERSION, ENV_LIMIT,
};
pub use plan::{AggMode, PhysicalPlan};
pub use stages::{
    assign_groups, partition_plan, single_stage, StageDag, StagePlan, DEFAULT_GROUP_SIZE,
    MAX_GROUP_SIZE, STATELESS_CONCURRENCY,
};

use crate::payload::PayloadError;
use crate::query::QueryError;
use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("malformed plan: {0}")]
    Malformed(String),
    #[error("unsupported plan: {0}")]
    Unsupported(String),
    #[error("group size must be between 1 and {max}, got {0}", max = MAX_GROUP_SIZE)]
    InvalidGroupSize(usize),
    #[error("invalid function name {0:?}")]
    InvalidName(String),
    #[error("bad context: {0}")]
    Context(String),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Store(#[from] SimError),
}
