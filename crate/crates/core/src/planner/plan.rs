use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::query::ops::projection_schema;
use crate::query::{
    filter, hash_join, hash_partition, join::join_schema, partial_aggregate_with, project, sort,
    AggExpr, AggShape, AggState, Expr, RecordBatch, ScalarType, Schema, SortKey,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggMode {
    Partial,
    Final,
}

/// Physical operator tree. The root is the sink side; leaves are
/// `MemorySource` placeholders filled with batches at execution time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhysicalPlan {
    MemorySource {
        name: String,
        schema: Schema,
    },
    Filter {
        predicate: Expr,
        input: Box<PhysicalPlan>,
    },
    Projection {
        exprs: Vec<(Expr, String)>,
        input: Box<PhysicalPlan>,
    },
    /// `Partial` folds rows into state batches of `shape.state_schema()`;
    /// `Final` merges those states. Both carry the original group and
    /// aggregate expressions.
    HashAggregate {
        mode: AggMode,
        groups: Vec<(Expr, String)>,
        aggs: Vec<AggExpr>,
        shape: AggShape,
        input: Box<PhysicalPlan>,
    },
    HashJoin {
        left: Box<PhysicalPlan>,
        right: Box<PhysicalPlan>,
        on: (String, String),
        residual: Option<Expr>,
    },
    Sort {
        keys: Vec<SortKey>,
        input: Box<PhysicalPlan>,
    },
    Repartition {
        keys: Vec<Expr>,
        partitions: usize,
        input: Box<PhysicalPlan>,
    },
    CoalesceBatches {
        input: Box<PhysicalPlan>,
    },
    SinkAction {
        input: Box<PhysicalPlan>,
    },
}

impl PhysicalPlan {
    pub fn name(&self) -> &'static str {
        match self {
            PhysicalPlan::MemorySource { .. } => "MemorySource",
            PhysicalPlan::Filter { .. } => "Filter",
            PhysicalPlan::Projection { .. } => "Projection",
            PhysicalPlan::HashAggregate {
                mode: AggMode::Partial,
                ..
            } => "HashAggregate(partial)",
            PhysicalPlan::HashAggregate { .. } => "HashAggregate(final)",
            PhysicalPlan::HashJoin { .. } => "HashJoin",
            PhysicalPlan::Sort { .. } => "Sort",
            PhysicalPlan::Repartition { .. } => "Repartition",
            PhysicalPlan::CoalesceBatches { .. } => "CoalesceBatches",
            PhysicalPlan::SinkAction { .. } => "SinkAction",
        }
    }

    pub fn children(&self) -> Vec<&PhysicalPlan> {
        match self {
            PhysicalPlan::MemorySource { .. } => vec![],
            PhysicalPlan::HashJoin { left, right, .. } => vec![left, right],
            PhysicalPlan::Filter { input, .. }
            | PhysicalPlan::Projection { input, .. }
            | PhysicalPlan::HashAggregate { input, .. }
            | PhysicalPlan::Sort { input, .. }
            | PhysicalPlan::Repartition { input, .. }
            | PhysicalPlan::CoalesceBatches { input }
            | PhysicalPlan::SinkAction { input } => vec![input],
        }
    }

    /// Leaves in left-to-right order.
    pub fn sources(&self) -> Vec<(&str, &Schema)> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a PhysicalPlan, out: &mut Vec<(&'a str, &'a Schema)>) {
            if let PhysicalPlan::MemorySource { name, schema } = p {
                out.push((name, schema));
            }
            for c in p.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Operator names in pre-order, root first.
    pub fn operators(&self) -> Vec<&'static str> {
        let mut out = vec![self.name()];
        for c in self.children() {
            out.extend(c.operators());
        }
        out
    }

    /// Output schema, checking every edge on the way down.
    pub fn schema(&self) -> Result<Schema, PlannerError> {
        Ok(match self {
            PhysicalPlan::MemorySource { schema, .. } => schema.clone(),
            PhysicalPlan::Filter { predicate, input } => {
                let s = input.schema()?;
                let t = predicate.data_type(&s)?;
                if t != ScalarType::Boolean {
                    return Err(PlannerError::Malformed(format!(
                        "filter predicate {predicate} is {t}"
                    )));
                }
                s
            }
            PhysicalPlan::Projection { exprs, input } => {
                let s = input.schema()?;
                let (e, n): (Vec<Expr>, Vec<String>) = exprs.iter().cloned().unzip();
                projection_schema(&s, &e, &n)?
            }
            PhysicalPlan::HashAggregate {
                mode,
                groups,
                aggs,
                shape,
                input,
            } => {
                let s = input.schema()?;
                match mode {
                    AggMode::Partial => {
                        if AggShape::resolve(&s, groups, aggs)? != *shape {
                            return Err(PlannerError::Malformed(
                                "partial aggregate shape does not match its input".into(),
                            ));
                        }
                        shape.state_schema()?
                    }
                    AggMode::Final => {
                        if s.fields() != shape.state_schema()?.fields() {
                            return Err(PlannerError::Malformed(
                                "final aggregate input is not the partial state schema".into(),
                            ));
                        }
                        shape.final_schema()?
                    }
                }
            }
            PhysicalPlan::HashJoin {
                left,
                right,
                on,
                residual,
            } => {
                let (l, r) = (left.schema()?, right.schema()?);
                let lt = l.field_with_name(&on.0)?.data_type;
                let rt = r.field_with_name(&on.1)?.data_type;
                if lt != rt {
                    return Err(PlannerError::Malformed(format!(
                        "join keys {} ({lt}) and {} ({rt}) differ in type",
                        on.0, on.1
                    )));
                }
                let joined = join_schema(&l, &r)?;
                if let Some(e) = residual {
                    if e.data_type(&joined)? != ScalarType::Boolean {
                        return Err(PlannerError::Malformed(format!("join residual {e} is not boolean")));
                    }
                }
                joined
            }
            PhysicalPlan::Sort { keys, input } => {
                let s = input.schema()?;
                for k in keys {
                    s.index_of(&k.column)?;
                }
                s
            }
            PhysicalPlan::Repartition {
                keys, input, ..
            } => {
                let s = input.schema()?;
                for k in keys {
                    k.data_type(&s)?;
                }
                s
            }
            PhysicalPlan::CoalesceBatches { input } | PhysicalPlan::SinkAction { input } => {
                input.schema()?
            }
        })
    }

    /// Evaluate the tree over `inputs`. Each leaf consumes the input batches
    /// whose schema equals its own. Exchange nodes are transparent here: the
    /// union of their partitions is their input.
    pub fn execute(&self, inputs: &[RecordBatch]) -> Result<RecordBatch, PlannerError> {
        Ok(match self {
            PhysicalPlan::MemorySource { schema, .. } => {
                let schema = Arc::new(schema.clone());
                let mine: Vec<RecordBatch> = inputs
                    .iter()
                    .filter(|b| b.schema().fields() == schema.fields())
                    .cloned()
                    .collect();
                RecordBatch::concat(&schema, &mine)?
            }
            PhysicalPlan::Filter { predicate, input } => filter(&input.execute(inputs)?, predicate)?,
            PhysicalPlan::Projection { exprs, input } => {
                let (e, n): (Vec<Expr>, Vec<String>) = exprs.iter().cloned().unzip();
                project(&input.execute(inputs)?, &e, &n)?
            }
            PhysicalPlan::HashAggregate {
                mode,
                groups,
                aggs,
                shape,
                input,
            } => {
                let batch = input.execute(inputs)?;
                match mode {
                    AggMode::Partial => {
                        partial_aggregate_with(&batch, shape, groups, aggs)?.to_state_batch()?
                    }
                    AggMode::Final => AggState::from_state_batch(shape, &batch)?.finalize()?,
                }
            }
            PhysicalPlan::HashJoin {
                left,
                right,
                on,
                residual,
            } => hash_join(
                &left.execute(inputs)?,
                &right.execute(inputs)?,
                (&on.0, &on.1),
                residual.as_ref(),
            )?,
            PhysicalPlan::Sort { keys, input } => sort(&input.execute(inputs)?, keys)?,
            PhysicalPlan::Repartition { input, .. }
            | PhysicalPlan::CoalesceBatches { input }
            | PhysicalPlan::SinkAction { input } => input.execute(inputs)?,
        })
    }

    /// Evaluate a stage output root into its partitions. A `Repartition` root
    /// hash-splits into `partitions` batches; anything else is one partition.
    pub fn execute_partitioned(
        &self,
        inputs: &[RecordBatch],
    ) -> Result<Vec<RecordBatch>, PlannerError> {
        match self {
            PhysicalPlan::Repartition {
                keys,
                partitions,
                input,
            } if !keys.is_empty() => {
                Ok(hash_partition(&input.execute(inputs)?, keys, *partitions)?)
            }
            _ => Ok(vec![self.execute(inputs)?]),
        }
    }

    /// Number of partitions this root emits.
    pub fn output_partitions(&self) -> usize {
        match self {
            PhysicalPlan::Repartition {
                keys, partitions, ..
            } if !keys.is_empty() => *partitions,
            _ => 1,
        }
    }
}
