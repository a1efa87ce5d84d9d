//! Deterministic simulator of a FaaS platform: function registry, instance
//! lifecycle, sync and async invocation, an at-least-once event queue with a
//! dead-letter queue, an object store, and per-millisecond billing.
//!
//! Time is virtual and counted in microseconds. Handlers run to completion
//! when their event is processed; a synchronous call made from inside a
//! handler runs the callee immediately, nested, at the caller's virtual time.

mod billing;
mod latency;
mod platform;
mod store;
mod trace;

pub use billing::{billed_ms, Arch, BillingModel, BillingReport, Dollars, FunctionBill, StoreBill};
pub use latency::LatencyModel;
pub use platform::{
    DeadLetter, FailureInjection, FailureKind, FunctionDef, Handler, HandlerError, Invocation,
    Platform, SimConfig, SyncOutcome, DEFAULT_CONCURRENCY, MAX_MEMORY_MB, MIN_MEMORY_MB,
};
pub use store::{ObjectStorage, ObjectStore};
pub use trace::{detail_field, Trace, TraceKind, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("function {0} not found")]
    NotFound(String),
    #[error("function {0} already exists")]
    AlreadyExists(String),
    #[error("payload of {size} bytes exceeds the {cap} byte limit")]
    PayloadTooLarge { size: usize, cap: usize },
    #[error("function {0} is at its concurrency limit")]
    Throttled(String),
    #[error("handler failed: {0}")]
    Handler(String),
    #[error("concurrency limit of {0} must be at least 1")]
    InvalidConcurrency(String),
    #[error("memory of {0} MB is outside the supported range")]
    InvalidMemory(u32),
    #[error("inline environment of {size} bytes exceeds {limit}")]
    EnvTooLarge { size: usize, limit: usize },
    #[error("no such key {0}")]
    NoSuchKey(String),
    #[error("the platform process crashed")]
    Crashed,
}
