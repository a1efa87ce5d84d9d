//! Columnar record batches, relational operators and event-time windows.
//!
//! Every operator is a pure function over immutable batches.

pub mod aggregate;
pub mod batch;
pub mod expr;
pub mod hash;
pub mod join;
pub mod ops;
pub mod types;
pub mod window;

pub use aggregate::{merge_final, partial_aggregate, partial_aggregate_with, AggExpr, AggFunc, AggShape, AggState};
pub use batch::{Column, ColumnData, RecordBatch, SchemaRef};
pub use expr::{col, lit, BinaryOp, Expr};
pub use join::hash_join;
pub use ops::{filter, hash_partition, project, sort, SortKey};
pub use types::{Field, ScalarType, Schema, Value};
pub use window::{assign_windows, WindowId, WindowSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown column: {0}")]
    UnknownColumn(String),
    #[error("duplicate field name: {0}")]
    DuplicateField(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{exprs} expressions but {names} output names")]
    ArityMismatch { exprs: usize, names: usize },
    #[error("partition count must be at least 1")]
    ZeroPartitions,
    #[error("incompatible aggregate states: {0}")]
    IncompatibleStates(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
}
