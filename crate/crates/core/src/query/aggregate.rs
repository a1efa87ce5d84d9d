//! Two-phase hash aggregation.
//!
//! `partial_aggregate` folds one batch into an [`AggState`]; states merge
//! associatively and commutatively, and `merge_final` turns any collection of
//! them into the result batch. States travel between stages as ordinary
//! record batches (see [`AggState::to_state_batch`]), with `avg` carried as a
//! `(sum, count)` pair so that merging stays exact.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::batch::{ColumnBuilder, RecordBatch};
use super::expr::{BoundExpr, Expr};
use super::types::{Field, ScalarType, Schema, Value};
use super::QueryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggExpr {
    pub func: AggFunc,
    pub arg: Expr,
    pub name: String,
}

impl AggExpr {
    pub fn new(func: AggFunc, arg: Expr, name: impl Into<String>) -> Self {
        AggExpr {
            func,
            arg,
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggSpec {
    pub func: AggFunc,
    pub input_type: ScalarType,
    pub name: String,
}

impl AggSpec {
    fn output_type(&self) -> ScalarType {
        match self.func {
            AggFunc::Count => ScalarType::Int64,
            AggFunc::Avg => ScalarType::Float64,
            AggFunc::Sum | AggFunc::Min | AggFunc::Max => self.input_type,
        }
    }

    fn state_fields(&self) -> Vec<Field> {
        let n = &self.name;
        match self.func {
            AggFunc::Count => vec![Field::new(format!("{n}#count"), ScalarType::Int64, false)],
            AggFunc::Sum => vec![Field::new(format!("{n}#sum"), self.input_type, true)],
            AggFunc::Min => vec![Field::new(format!("{n}#min"), self.input_type, true)],
            AggFunc::Max => vec![Field::new(format!("{n}#max"), self.input_type, true)],
            AggFunc::Avg => vec![
                Field::new(format!("{n}#sum"), self.input_type, false),
                Field::new(format!("{n}#count"), ScalarType::Int64, false),
            ],
        }
    }
}

/// Group and aggregate layout shared by every state of one aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggShape {
    pub group_fields: Vec<Field>,
    pub aggs: Vec<AggSpec>,
}

impl AggShape {
    pub fn resolve(
        input: &Schema,
        groups: &[(Expr, String)],
        aggs: &[AggExpr],
    ) -> Result<Self, QueryError> {
        let group_fields = groups
            .iter()
            .map(|(e, n)| Ok(Field::new(n.clone(), e.data_type(input)?, e.nullable(input)?)))
            .collect::<Result<Vec<_>, QueryError>>()?;
        let aggs = aggs
            .iter()
            .map(|a| {
                let input_type = a.arg.data_type(input)?;
                if matches!(a.func, AggFunc::Sum | AggFunc::Avg) && !input_type.is_numeric() {
                    return Err(QueryError::TypeMismatch(format!(
                        "{:?}({}) needs a numeric argument, got {input_type}",
                        a.func, a.arg
                    )));
                }
                Ok(AggSpec {
                    func: a.func,
                    input_type,
                    name: a.name.clone(),
                })
            })
            .collect::<Result<Vec<_>, QueryError>>()?;
        let shape = AggShape { group_fields, aggs };
        // Name collisions surface here.
        shape.state_schema()?;
        shape.final_schema()?;
        Ok(shape)
    }

    /// Schema of the intermediate batches exchanged between partial and
    /// final aggregation.
    pub fn state_schema(&self) -> Result<Schema, QueryError> {
        let mut fields = self.group_fields.clone();
        for a in &self.aggs {
            fields.extend(a.state_fields());
        }
        Schema::new(fields)
    }

    pub fn final_schema(&self) -> Result<Schema, QueryError> {
        let mut fields = self.group_fields.clone();
        for a in &self.aggs {
            let nullable = !matches!(a.func, AggFunc::Count);
            fields.push(Field::new(a.name.clone(), a.output_type(), nullable));
        }
        Schema::new(fields)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Accumulator {
    Count(i64),
    SumInt(Option<i64>),
    SumFloat(Option<f64>),
    Min(Option<Value>),
    Max(Option<Value>),
    AvgInt { sum: i64, count: i64 },
    AvgFloat { sum: f64, count: i64 },
}

impl Accumulator {
    fn new(spec: &AggSpec) -> Self {
        let float = spec.input_type == ScalarType::Float64;
        match (spec.func, float) {
            (AggFunc::Count, _) => Accumulator::Count(0),
            (AggFunc::Sum, false) => Accumulator::SumInt(None),
            (AggFunc::Sum, true) => Accumulator::SumFloat(None),
            (AggFunc::Min, _) => Accumulator::Min(None),
            (AggFunc::Max, _) => Accumulator::Max(None),
            (AggFunc::Avg, false) => Accumulator::AvgInt { sum: 0, count: 0 },
            (AggFunc::Avg, true) => Accumulator::AvgFloat { sum: 0.0, count: 0 },
        }
    }

    fn update(&mut self, v: &Value) {
        if v.is_null() {
            return;
        }
        match self {
            Accumulator::Count(c) => *c += 1,
            Accumulator::SumInt(s) => *s = Some(s.unwrap_or(0).wrapping_add(v.as_i64().unwrap_or(0))),
            Accumulator::SumFloat(s) => *s = Some(s.unwrap_or(0.0) + v.as_f64().unwrap_or(0.0)),
            Accumulator::Min(m) => {
                if m.as_ref().is_none_or(|cur| v < cur) {
                    *m = Some(v.clone());
                }
            }
            Accumulator::Max(m) => {
                if m.as_ref().is_none_or(|cur| v > cur) {
                    *m = Some(v.clone());
                }
            }
            Accumulator::AvgInt { sum, count } => {
                *sum = sum.wrapping_add(v.as_i64().unwrap_or(0));
                *count += 1;
            }
            Accumulator::AvgFloat { sum, count } => {
                *sum += v.as_f64().unwrap_or(0.0);
                *count += 1;
            }
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        match (self, other) {
            (Accumulator::Count(a), Accumulator::Count(b)) => *a += b,
            (Accumulator::SumInt(a), Accumulator::SumInt(b)) => {
                if let Some(b) = b {
                    *a = Some(a.unwrap_or(0).wrapping_add(*b));
                }
            }
            (Accumulator::SumFloat(a), Accumulator::SumFloat(b)) => {
                if let Some(b) = b {
                    *a = Some(a.unwrap_or(0.0) + b);
                }
            }
            (Accumulator::Min(a), Accumulator::Min(b)) => {
                if let Some(b) = b {
                    if a.as_ref().is_none_or(|cur| b < cur) {
                        *a = Some(b.clone());
                    }
                }
            }
            (Accumulator::Max(a), Accumulator::Max(b)) => {
                if let Some(b) = b {
                    if a.as_ref().is_none_or(|cur| b > cur) {
                        *a = Some(b.clone());
                    }
                }
            }
            (Accumulator::AvgInt { sum, count }, Accumulator::AvgInt { sum: s, count: c }) => {
                *sum = sum.wrapping_add(*s);
                *count += c;
            }
            (Accumulator::AvgFloat { sum, count }, Accumulator::AvgFloat { sum: s, count: c }) => {
                *sum += s;
                *count += c;
            }
            _ => unreachable!("accumulators built from the same shape"),
        }
    }

    fn state_values(&self) -> Vec<Value> {
        match self {
            Accumulator::Count(c) => vec![Value::Int64(*c)],
            Accumulator::SumInt(s) => vec![s.map_or(Value::Null, Value::Int64)],
            Accumulator::SumFloat(s) => vec![s.map_or(Value::Null, Value::Float64)],
            Accumulator::Min(m) | Accumulator::Max(m) => vec![m.clone().unwrap_or(Value::Null)],
            Accumulator::AvgInt { sum, count } => vec![Value::Int64(*sum), Value::Int64(*count)],
            Accumulator::AvgFloat { sum, count } => vec![Value::Float64(*sum), Value::Int64(*count)],
        }
    }

    fn from_state_values(spec: &AggSpec, vals: &[Value]) -> Result<Self, QueryError> {
        let bad = || QueryError::IncompatibleStates(format!("bad state for aggregate {}", spec.name));
        let mut acc = Accumulator::new(spec);
        match &mut acc {
            Accumulator::Count(c) => *c = vals[0].as_i64().ok_or_else(bad)?,
            Accumulator::SumInt(s) => *s = vals[0].as_i64(),
            Accumulator::SumFloat(s) => *s = vals[0].as_f64(),
            Accumulator::Min(m) | Accumulator::Max(m) => {
                *m = (!vals[0].is_null()).then(|| vals[0].clone())
            }
            Accumulator::AvgInt { sum, count } => {
                *sum = vals[0].as_i64().ok_or_else(bad)?;
                *count = vals[1].as_i64().ok_or_else(bad)?;
            }
            Accumulator::AvgFloat { sum, count } => {
                *sum = vals[0].as_f64().ok_or_else(bad)?;
                *count = vals[1].as_i64().ok_or_else(bad)?;
            }
        }
        Ok(acc)
    }

    fn final_value(&self) -> Value {
        match self {
            Accumulator::Count(c) => Value::Int64(*c),
            Accumulator::SumInt(s) => s.map_or(Value::Null, Value::Int64),
            Accumulator::SumFloat(s) => s.map_or(Value::Null, Value::Float64),
            Accumulator::Min(m) | Accumulator::Max(m) => m.clone().unwrap_or(Value::Null),
            Accumulator::AvgInt { sum, count } => {
                if *count == 0 {
                    Value::Null
                } else {
                    Value::Float64(*sum as f64 / *count as f64)
                }
            }
            Accumulator::AvgFloat { sum, count } => {
                if *count == 0 {
                    Value::Null
                } else {
                    Value::Float64(*sum / *count as f64)
                }
            }
        }
    }
}

/// Group keys mapped to per-aggregate accumulators. Iteration, and so every
/// produced batch, is ordered by group key.
#[derive(Debug, Clone, PartialEq)]
pub struct AggState {
    shape: AggShape,
    groups: BTreeMap<Vec<Value>, Vec<Accumulator>>,
}

impl AggState {
    pub fn empty(shape: AggShape) -> Self {
        AggState {
            shape,
            groups: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> &AggShape {
        &self.shape
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    fn accumulate(
        &mut self,
        batch: &RecordBatch,
        group_exprs: &[BoundExpr],
        agg_args: &[BoundExpr],
    ) {
        for row in 0..batch.num_rows() {
            let key: Vec<Value> = group_exprs.iter().map(|g| g.eval_row(batch, row)).collect();
            let shape = &self.shape;
            let accs = self
                .groups
                .entry(key)
                .or_insert_with(|| shape.aggs.iter().map(Accumulator::new).collect());
            for (acc, arg) in accs.iter_mut().zip(agg_args) {
                acc.update(&arg.eval_row(batch, row));
            }
        }
    }

    /// Fold `other` into `self`.
    pub fn merge(&mut self, other: &AggState) -> Result<(), QueryError> {
        if self.shape != other.shape {
            return Err(QueryError::IncompatibleStates(
                "aggregate states differ in group/aggregate shape".into(),
            ));
        }
        for (key, accs) in &other.groups {
            match self.groups.get_mut(key) {
                Some(mine) => {
                    for (a, b) in mine.iter_mut().zip(accs) {
                        a.merge(b);
                    }
                }
                None => {
                    self.groups.insert(key.clone(), accs.clone());
                }
            }
        }
        Ok(())
    }

    pub fn to_state_batch(&self) -> Result<RecordBatch, QueryError> {
        let schema = Arc::new(self.shape.state_schema()?);
        let rows: Vec<Vec<Value>> = self
            .groups
            .iter()
            .map(|(k, accs)| {
                let mut row = k.clone();
                for a in accs {
                    row.extend(a.state_values());
                }
                row
            })
            .collect();
        RecordBatch::from_rows(schema, &rows)
    }

    /// Rebuild a state from a batch produced by [`AggState::to_state_batch`].
    pub fn from_state_batch(shape: &AggShape, batch: &RecordBatch) -> Result<Self, QueryError> {
        let expected = shape.state_schema()?;
        if batch.schema().fields() != expected.fields() {
            return Err(QueryError::IncompatibleStates(
                "state batch schema does not match aggregate shape".into(),
            ));
        }
        let mut state = AggState::empty(shape.clone());
        let g = shape.group_fields.len();
        for row in batch.rows() {
            let key = row[..g].to_vec();
            let mut pos = g;
            let mut accs = Vec::with_capacity(shape.aggs.len());
            for spec in &shape.aggs {
                let width = spec.state_fields().len();
                accs.push(Accumulator::from_state_values(spec, &row[pos..pos + width])?);
                pos += width;
            }
            let single = AggState {
                shape: shape.clone(),
                groups: BTreeMap::from([(key, accs)]),
            };
            state.merge(&single)?;
        }
        Ok(state)
    }

    pub fn finalize(&self) -> Result<RecordBatch, QueryError> {
        let schema = Arc::new(self.shape.final_schema()?);
        let mut builders: Vec<ColumnBuilder> = schema
            .fields()
            .iter()
            .map(|f| ColumnBuilder::new(f.data_type, self.groups.len()))
            .collect();
        for (key, accs) in &self.groups {
            let values = key.iter().cloned().chain(accs.iter().map(Accumulator::final_value));
            for (b, v) in builders.iter_mut().zip(values) {
                b.push(&v)?;
            }
        }
        RecordBatch::try_new(schema, builders.into_iter().map(ColumnBuilder::finish).collect())
    }
}

/// Fold one batch into a fresh partial state.
pub fn partial_aggregate(
    batch: &RecordBatch,
    group_exprs: &[(Expr, String)],
    agg_exprs: &[AggExpr],
) -> Result<AggState, QueryError> {
    let shape = AggShape::resolve(batch.schema(), group_exprs, agg_exprs)?;
    partial_aggregate_with(batch, &shape, group_exprs, agg_exprs)
}

/// Like [`partial_aggregate`] with a pre-resolved shape.
pub fn partial_aggregate_with(
    batch: &RecordBatch,
    shape: &AggShape,
    group_exprs: &[(Expr, String)],
    agg_exprs: &[AggExpr],
) -> Result<AggState, QueryError> {
    let groups = group_exprs
        .iter()
        .map(|(e, _)| e.bind(batch.schema()))
        .collect::<Result<Vec<_>, _>>()?;
    let args = agg_exprs
        .iter()
        .map(|a| a.arg.bind(batch.schema()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut state = AggState::empty(shape.clone());
    state.accumulate(batch, &groups, &args);
    Ok(state)
}

/// Merge partial states and produce the final result, ordered by group key.
pub fn merge_final(states: &[AggState]) -> Result<RecordBatch, QueryError> {
    let Some((first, rest)) = states.split_first() else {
        return Err(QueryError::IncompatibleStates("no states to merge".into()));
    };
    let mut acc = first.clone();
    for s in rest {
        acc.merge(s)?;
    }
    acc.finalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::expr::col;

    fn batch(rows: &[(i64, i64)]) -> RecordBatch {
        let schema = Arc::new(
            Schema::new(vec![
                Field::new("g", ScalarType::Int64, false),
                Field::new("v", ScalarType::Int64, true),
            ])
            .unwrap(),
        );
        let rows: Vec<Vec<Value>> = rows.iter().map(|(g, v)| vec![(*g).into(), (*v).into()]).collect();
        RecordBatch::from_rows(schema, &rows).unwrap()
    }

    fn aggs() -> Vec<AggExpr> {
        vec![
            AggExpr::new(AggFunc::Avg, col("v"), "avg_v"),
            AggExpr::new(AggFunc::Max, col("v"), "max_v"),
            AggExpr::new(AggFunc::Count, col("v"), "n"),
        ]
    }

    #[test]
    fn empty_state_gives_empty_batch() {
        let s = partial_aggregate(&batch(&[]), &[(col("g"), "g".into())], &aggs()).unwrap();
        let out = merge_final(&[s]).unwrap();
        assert_eq!(out.num_rows(), 0);
        assert_eq!(out.schema().len(), 4);
    }

    #[test]
    fn avg_split_is_associative() {
        let groups: Vec<(Expr, String)> = vec![];
        let a = partial_aggregate(&batch(&[(0, 1)]), &groups, &aggs()).unwrap();
        let b = partial_aggregate(&batch(&[(0, 2), (0, 3)]), &groups, &aggs()).unwrap();
        let out = merge_final(&[a, b]).unwrap();
        assert_eq!(out.row(0), vec![Value::Float64(2.0), Value::Int64(3), Value::Int64(3)]);
    }

    #[test]
    fn nulls_are_excluded() {
        let schema = Arc::new(Schema::new(vec![Field::new("v", ScalarType::Int64, true)]).unwrap());
        let b = RecordBatch::from_rows(schema, &[vec![Value::Null], vec![4.into()]]).unwrap();
        let s = partial_aggregate(&b, &[], &aggs()).unwrap();
        let out = merge_final(&[s]).unwrap();
        assert_eq!(out.row(0), vec![Value::Float64(4.0), Value::Int64(4), Value::Int64(1)]);
    }

    #[test]
    fn state_batch_round_trip() {
        let g = vec![(col("g"), "g".to_string())];
        let s = partial_aggregate(&batch(&[(1, 5), (2, 7), (1, 9)]), &g, &aggs()).unwrap();
        let sb = s.to_state_batch().unwrap();
        assert_eq!(sb.num_rows(), 2);
        let back = AggState::from_state_batch(s.shape(), &sb).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn incompatible_shapes() {
        let a = partial_aggregate(&batch(&[(1, 1)]), &[(col("g"), "g".into())], &aggs()).unwrap();
        let b = partial_aggregate(&batch(&[(1, 1)]), &[], &aggs()).unwrap();
        assert!(matches!(merge_final(&[a, b]), Err(QueryError::IncompatibleStates(_))));
    }

    #[test]
    fn sum_of_strings_rejected() {
        let schema = Arc::new(Schema::new(vec![Field::new("s", ScalarType::Utf8, false)]).unwrap());
        let b = RecordBatch::new_empty(schema);
        let err = partial_aggregate(&b, &[], &[AggExpr::new(AggFunc::Sum, col("s"), "x")]).unwrap_err();
        assert!(matches!(err, QueryError::TypeMismatch(_)));
    }
}
