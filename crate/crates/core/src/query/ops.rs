use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::batch::RecordBatch;
use super::expr::{BoundExpr, Expr};
use super::hash::StableHasher;
use super::types::{Field, ScalarType, Schema, Value};
use super::QueryError;

/// Seed used by `hash_partition`. Every stage partitions with the same seed
/// so that equal keys agree across instances.
pub const PARTITION_SEED: u64 = 0x005e_ed0f_5a11;

pub fn filter(batch: &RecordBatch, predicate: &Expr) -> Result<RecordBatch, QueryError> {
    let bound = predicate.bind(batch.schema())?;
    if bound.data_type() != ScalarType::Boolean {
        return Err(QueryError::TypeMismatch(format!(
            "filter predicate {predicate} is {}, expected Boolean",
            bound.data_type()
        )));
    }
    let keep: Vec<usize> = (0..batch.num_rows())
        .filter(|&i| bound.eval_row(batch, i) == Value::Boolean(true))
        .collect();
    if keep.len() == batch.num_rows() {
        return Ok(batch.clone());
    }
    Ok(batch.take(&keep))
}

/// Output schema of a projection.
pub fn projection_schema(
    input: &Schema,
    exprs: &[Expr],
    out_names: &[String],
) -> Result<Schema, QueryError> {
    if exprs.len() != out_names.len() {
        return Err(QueryError::ArityMismatch {
            exprs: exprs.len(),
            names: out_names.len(),
        });
    }
    let fields = exprs
        .iter()
        .zip(out_names)
        .map(|(e, n)| Ok(Field::new(n.clone(), e.data_type(input)?, e.nullable(input)?)))
        .collect::<Result<Vec<_>, QueryError>>()?;
    Schema::new(fields)
}

pub fn project(
    batch: &RecordBatch,
    exprs: &[Expr],
    out_names: &[String],
) -> Result<RecordBatch, QueryError> {
    let schema = Arc::new(projection_schema(batch.schema(), exprs, out_names)?);
    let columns = exprs
        .iter()
        .map(|e| e.evaluate(batch))
        .collect::<Result<Vec<_>, _>>()?;
    if batch.num_rows() == 0 {
        return Ok(RecordBatch::new_empty(schema));
    }
    RecordBatch::try_new(schema, columns)
}

/// Hash-partition index of one row: `H(key values) mod m`, with `H` the
/// fixed hash of [`super::hash`] seeded by [`PARTITION_SEED`].
pub fn partition_index(keys: &[Value], m: usize) -> usize {
    let mut h = StableHasher::with_seed(PARTITION_SEED);
    for k in keys {
        h.write_value(k);
    }
    (h.finish() % m as u64) as usize
}

/// Split `batch` into `m` partitions by key hash. Row order within each
/// partition follows input order.
pub fn hash_partition(
    batch: &RecordBatch,
    key_exprs: &[Expr],
    m: usize,
) -> Result<Vec<RecordBatch>, QueryError> {
    if m == 0 {
        return Err(QueryError::ZeroPartitions);
    }
    let bound = key_exprs
        .iter()
        .map(|e| e.bind(batch.schema()))
        .collect::<Result<Vec<BoundExpr>, _>>()?;
    if m == 1 {
        return Ok(vec![batch.clone()]);
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut key = Vec::with_capacity(bound.len());
    for row in 0..batch.num_rows() {
        key.clear();
        key.extend(bound.iter().map(|b| b.eval_row(batch, row)));
        buckets[partition_index(&key, m)].push(row);
    }
    Ok(buckets.iter().map(|idx| batch.take(idx)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SortKey {
    pub column: String,
    pub ascending: bool,
}

impl SortKey {
    pub fn asc(column: impl Into<String>) -> Self {
        SortKey {
            column: column.into(),
            ascending: true,
        }
    }

    pub fn desc(column: impl Into<String>) -> Self {
        SortKey {
            column: column.into(),
            ascending: false,
        }
    }
}

/// Stable sort. Nulls order before all values in ascending order.
pub fn sort(batch: &RecordBatch, keys: &[SortKey]) -> Result<RecordBatch, QueryError> {
    let cols = keys
        .iter()
        .map(|k| Ok((batch.column(batch.schema().index_of(&k.column)?), k.ascending)))
        .collect::<Result<Vec<_>, QueryError>>()?;
    let mut idx: Vec<usize> = (0..batch.num_rows()).collect();
    idx.sort_by(|&a, &b| {
        for (c, asc) in &cols {
            let ord = c.value(a).cmp(&c.value(b));
            let ord = if *asc { ord } else { ord.reverse() };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    });
    Ok(batch.take(&idx))
}
