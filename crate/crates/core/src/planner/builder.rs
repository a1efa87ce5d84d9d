use std::collections::HashSet;

use super::plan::{AggMode, PhysicalPlan};
use super::PlannerError;
use crate::query::{AggExpr, AggShape, Expr, Schema, SortKey};

/// Fluent construction of a schema-checked [`PhysicalPlan`].
///
/// ```
/// use squall::planner::PlanBuilder;
/// use squall::query::{col, lit, Field, ScalarType, Schema};
///
/// let bids = Schema::new(vec![Field::new("price", ScalarType::Int64, false)]).unwrap();
/// let plan = PlanBuilder::source("bid", bids)
///     .filter(col("price").gt(lit(10)))
///     .unwrap()
///     .build();
/// assert_eq!(plan.operators(), ["SinkAction", "Filter", "MemorySource"]);
/// ```
#[derive(Debug, Clone)]
pub struct PlanBuilder {
    plan: PhysicalPlan,
    schema: Schema,
}

impl PlanBuilder {
    pub fn source(name: impl Into<String>, schema: Schema) -> Self {
        PlanBuilder {
            plan: PhysicalPlan::MemorySource {
                name: name.into(),
                schema: schema.clone(),
            },
            schema,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    fn wrap(plan: PhysicalPlan) -> Result<Self, PlannerError> {
        let schema = plan.schema()?;
        Ok(PlanBuilder { plan, schema })
    }

    pub fn filter(self, predicate: Expr) -> Result<Self, PlannerError> {
        Self::wrap(PhysicalPlan::Filter {
            predicate,
            input: Box::new(self.plan),
        })
    }

    pub fn project(self, exprs: Vec<(Expr, &str)>) -> Result<Self, PlannerError> {
        Self::wrap(PhysicalPlan::Projection {
            exprs: exprs.into_iter().map(|(e, n)| (e, n.to_string())).collect(),
            input: Box::new(self.plan),
        })
    }

    /// Grouped aggregation, planned as a partial aggregate feeding a final one.
    pub fn aggregate(
        self,
        groups: Vec<(Expr, &str)>,
        aggs: Vec<AggExpr>,
    ) -> Result<Self, PlannerError> {
        let groups: Vec<(Expr, String)> =
            groups.into_iter().map(|(e, n)| (e, n.to_string())).collect();
        let shape = AggShape::resolve(&self.schema, &groups, &aggs)?;
        let partial = PhysicalPlan::HashAggregate {
            mode: AggMode::Partial,
            groups: groups.clone(),
            aggs: aggs.clone(),
            shape: shape.clone(),
            input: Box::new(self.plan),
        };
        Self::wrap(PhysicalPlan::HashAggregate {
            mode: AggMode::Final,
            groups,
            aggs,
            shape,
            input: Box::new(partial),
        })
    }

    /// Inner equi-join `self.left_key = right.right_key`.
    pub fn join(
        self,
        right: PlanBuilder,
        left_key: &str,
        right_key: &str,
        residual: Option<Expr>,
    ) -> Result<Self, PlannerError> {
        Self::wrap(PhysicalPlan::HashJoin {
            left: Box::new(self.plan),
            right: Box::new(right.plan),
            on: (left_key.to_string(), right_key.to_string()),
            residual,
        })
    }

    pub fn sort(self, keys: Vec<SortKey>) -> Result<Self, PlannerError> {
        Self::wrap(PhysicalPlan::Sort {
            keys,
            input: Box::new(self.plan),
        })
    }

    /// Finish the plan: push filters below joins where they reference one
    /// side only, and put the sink on top.
    pub fn build(self) -> PhysicalPlan {
        PhysicalPlan::SinkAction {
            input: Box::new(push_down_filters(self.plan)),
        }
    }
}

fn column_set(schema: &Schema) -> HashSet<&str> {
    schema.fields().iter().map(|f| f.name.as_str()).collect()
}

fn push_down_filters(plan: PhysicalPlan) -> PhysicalPlan {
    match plan {
        PhysicalPlan::Filter { predicate, input } => match *input {
            PhysicalPlan::HashJoin {
                left,
                right,
                on,
                residual,
            } => {
                let cols: Vec<String> =
                    predicate.columns().into_iter().map(String::from).collect();
                let side_has = |p: &PhysicalPlan| {
                    p.schema()
                        .map(|s| {
                            let set = column_set(&s);
                            cols.iter().all(|c| set.contains(c.as_str()))
                        })
                        .unwrap_or(false)
                };
                let (left, right) = (push_down_filters(*left), push_down_filters(*right));
                if side_has(&left) {
                    let left = push_down_filters(PhysicalPlan::Filter {
                        predicate,
                        input: Box::new(left),
                    });
                    return PhysicalPlan::HashJoin {
                        left: Box::new(left),
                        right: Box::new(right),
                        on,
                        residual,
                    };
                }
                if side_has(&right) {
                    let right = push_down_filters(PhysicalPlan::Filter {
                        predicate,
                        input: Box::new(right),
                    });
                    return PhysicalPlan::HashJoin {
                        left: Box::new(left),
                        right: Box::new(right),
                        on,
                        residual,
                    };
                }
                PhysicalPlan::Filter {
                    predicate,
                    input: Box::new(PhysicalPlan::HashJoin {
                        left: Box::new(left),
                        right: Box::new(right),
                        on,
                        residual,
                    }),
                }
            }
            other => PhysicalPlan::Filter {
                predicate,
                input: Box::new(push_down_filters(other)),
            },
        },
        other => map_children(other, push_down_filters),
    }
}

fn map_children(plan: PhysicalPlan, f: fn(PhysicalPlan) -> PhysicalPlan) -> PhysicalPlan {
    let b = |p: Box<PhysicalPlan>| Box::new(f(*p));
    match plan {
        PhysicalPlan::MemorySource { .. } => plan,
        PhysicalPlan::Filter { predicate, input } => PhysicalPlan::Filter {
            predicate,
            input: b(input),
        },
        PhysicalPlan::Projection { exprs, input } => PhysicalPlan::Projection {
            exprs,
            input: b(input),
        },
        PhysicalPlan::HashAggregate {
            mode,
            groups,
            aggs,
            shape,
            input,
        } => PhysicalPlan::HashAggregate {
            mode,
            groups,
            aggs,
            shape,
            input: b(input),
        },
        PhysicalPlan::HashJoin {
            left,
            right,
            on,
            residual,
        } => PhysicalPlan::HashJoin {
            left: b(left),
            right: b(right),
            on,
            residual,
        },
        PhysicalPlan::Sort { keys, input } => PhysicalPlan::Sort {
            keys,
            input: b(input),
        },
        PhysicalPlan::Repartition {
            keys,
            partitions,
            input,
        } => PhysicalPlan::Repartition {
            keys,
            partitions,
            input: b(input),
        },
        PhysicalPlan::CoalesceBatches { input } => PhysicalPlan::CoalesceBatches { input: b(input) },
        PhysicalPlan::SinkAction { input } => PhysicalPlan::SinkAction { input: b(input) },
    }
}
