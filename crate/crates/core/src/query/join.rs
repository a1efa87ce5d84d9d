use std::collections::HashMap;
use std::sync::Arc;

use super::batch::{Column, RecordBatch};
use super::expr::Expr;
use super::types::{Schema, Value};
use super::QueryError;

/// Output schema of an inner equi-join: left fields then right fields.
pub fn join_schema(left: &Schema, right: &Schema) -> Result<Schema, QueryError> {
    left.join(right)
}

/// Inner hash join on `left.on.0 = right.on.1`, optionally filtered by a
/// residual predicate over the joined schema. Multiset semantics; null keys
/// never match. Output rows follow left order, then right order per match.
pub fn hash_join(
    left: &RecordBatch,
    right: &RecordBatch,
    on: (&str, &str),
    residual: Option<&Expr>,
) -> Result<RecordBatch, QueryError> {
    let li = left.schema().index_of(on.0)?;
    let ri = right.schema().index_of(on.1)?;
    let lt = left.schema().field(li).data_type;
    let rt = right.schema().field(ri).data_type;
    if lt != rt {
        return Err(QueryError::TypeMismatch(format!(
            "join key {} is {lt} but {} is {rt}",
            on.0, on.1
        )));
    }
    let schema = Arc::new(join_schema(left.schema(), right.schema())?);
    if let Some(r) = residual {
        let t = r.data_type(&schema)?;
        if t != super::types::ScalarType::Boolean {
            return Err(QueryError::TypeMismatch(format!("join residual {r} is {t}")));
        }
    }

    let rkeys = right.column(ri);
    let mut table: HashMap<Value, Vec<usize>> = HashMap::new();
    for row in 0..right.num_rows() {
        let k = rkeys.value(row);
        if !k.is_null() {
            table.entry(k).or_default().push(row);
        }
    }

    let lkeys = left.column(li);
    let mut lidx = Vec::new();
    let mut ridx = Vec::new();
    for row in 0..left.num_rows() {
        let k = lkeys.value(row);
        if k.is_null() {
            continue;
        }
        if let Some(matches) = table.get(&k) {
            for &m in matches {
                lidx.push(row);
                ridx.push(m);
            }
        }
    }

    let columns: Vec<Column> = left
        .columns()
        .iter()
        .map(|c| c.take(&lidx))
        .chain(right.columns().iter().map(|c| c.take(&ridx)))
        .collect();
    let joined = if lidx.is_empty() {
        RecordBatch::new_empty(schema)
    } else {
        RecordBatch::try_new(schema, columns)?
    };
    match residual {
        Some(r) => super::ops::filter(&joined, r),
        None => Ok(joined),
    }
}
