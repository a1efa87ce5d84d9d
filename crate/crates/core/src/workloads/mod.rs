//! Benchmark workloads: NEXMark and YSB generators, the benchmark queries,
//! their reference answers and the micro-batch driver.

mod driver;
pub mod nexmark;
pub mod oracle;
mod queries;
pub mod ysb;

pub use driver::{
    compare_results, deploy, run_benchmark, BenchConfig, BenchReport, BenchRun, Deployment,
    DriverStats, ExecMode, SinkResults, Source,
};
pub use queries::{QueryId, EPOCH_MS};

use crate::fault::FaultError;
use crate::payload::PayloadError;
use crate::planner::PlannerError;
use crate::query::QueryError;
use crate::runtime::RuntimeError;
use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("epoch {epoch} failed: {reason}")]
    EpochFailed { epoch: u64, reason: String },
}

impl WorkloadError {
    /// Whether the error is the simulated process dying.
    pub fn is_crash(&self) -> bool {
        matches!(
            self,
            WorkloadError::Sim(SimError::Crashed) | WorkloadError::Fault(FaultError::Sim(SimError::Crashed))
        ) || matches!(self, WorkloadError::Runtime(RuntimeError::Sim(SimError::Crashed)))
    }
}
