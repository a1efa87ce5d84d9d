use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::context::FunctionGroup;
use super::plan::{AggMode, PhysicalPlan};
use super::PlannerError;
use crate::query::col;

/// Concurrency of a stateless stage's single function.
pub const STATELESS_CONCURRENCY: u32 = 1000;
/// Members per stateful group unless configured otherwise.
pub const DEFAULT_GROUP_SIZE: usize = 8;
/// Two-digit member ids cap the group size.
pub const MAX_GROUP_SIZE: usize = 100;

/// One query stage, served by one function group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage_id: u8,
    /// One root per output port. The sink stage has a single `SinkAction`
    /// root; every other root ends in `Repartition` or `CoalesceBatches`.
    pub outputs: Vec<PhysicalPlan>,
    /// Stateful stages gather every upstream payload before running.
    pub stateful: bool,
    pub group_size: usize,
    pub concurrency: u32,
    /// Distinct shuffle ids arriving at this stage.
    pub input_partitions: usize,
    pub next: Option<FunctionGroup>,
}

impl StagePlan {
    pub fn is_sink(&self) -> bool {
        matches!(self.outputs.as_slice(), [PhysicalPlan::SinkAction { .. }])
    }

    pub fn ports(&self) -> usize {
        self.outputs.len()
    }

    /// Leaf placeholders across all output roots.
    pub fn sources(&self) -> Vec<(&str, &crate::query::Schema)> {
        self.outputs.iter().flat_map(|o| o.sources()).collect()
    }

    pub fn output_partitions(&self) -> usize {
        self.outputs
            .iter()
            .map(PhysicalPlan::output_partitions)
            .max()
            .unwrap_or(1)
    }
}

/// Stages in execution order: index 0 reads the sources, the last one is the
/// sink. Stage `i` feeds stage `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDag {
    pub stages: Vec<StagePlan>,
}

impl StageDag {
    pub fn edges(&self) -> Vec<(u8, u8)> {
        self.stages
            .windows(2)
            .map(|w| (w[0].stage_id, w[1].stage_id))
            .collect()
    }

    pub fn sink(&self) -> &StagePlan {
        self.stages.last().expect("a dag has at least one stage")
    }

    pub fn function_count(&self) -> usize {
        self.stages.iter().map(|s| s.group_size).sum()
    }
}

fn placeholder(stage: usize, port: usize, plan: &PhysicalPlan) -> Result<PhysicalPlan, PlannerError> {
    Ok(PhysicalPlan::MemorySource {
        name: format!("stage{stage:02}.port{port}"),
        schema: plan.schema()?,
    })
}

/// Cut the child of an exchange point, wrapping it in the exchange operator
/// the consumer needs.
fn exchange(keys: Vec<crate::query::Expr>, child: PhysicalPlan) -> PhysicalPlan {
    if keys.is_empty() {
        PhysicalPlan::CoalesceBatches {
            input: Box::new(child),
        }
    } else {
        PhysicalPlan::Repartition {
            keys,
            partitions: 1,
            input: Box::new(child),
        }
    }
}

/// Replace every cut child below `plan` with a placeholder, collecting the
/// wrapped children in port order. Does not descend past a cut.
fn cut(plan: PhysicalPlan, producer: usize, out: &mut Vec<PhysicalPlan>) -> Result<PhysicalPlan, PlannerError> {
    let take = |child: PhysicalPlan, out: &mut Vec<PhysicalPlan>| -> Result<PhysicalPlan, PlannerError> {
        let leaf = placeholder(producer, out.len(), &child)?;
        out.push(child);
        Ok(leaf)
    };
    Ok(match plan {
        PhysicalPlan::HashAggregate {
            mode: AggMode::Final,
            groups,
            aggs,
            shape,
            input,
        } => {
            let keys = groups.iter().map(|(_, n)| col(n.clone())).collect();
            let leaf = take(exchange(keys, *input), out)?;
            PhysicalPlan::HashAggregate {
                mode: AggMode::Final,
                groups,
                aggs,
                shape,
                input: Box::new(leaf),
            }
        }
        PhysicalPlan::HashJoin {
            left,
            right,
            on,
            residual,
        } => {
            let l = take(exchange(vec![col(on.0.clone())], *left), out)?;
            let r = take(exchange(vec![col(on.1.clone())], *right), out)?;
            PhysicalPlan::HashJoin {
                left: Box::new(l),
                right: Box::new(r),
                on,
                residual,
            }
        }
        PhysicalPlan::Sort { keys, input } => {
            let leaf = take(exchange(vec![], *input), out)?;
            PhysicalPlan::Sort {
                keys,
                input: Box::new(leaf),
            }
        }
        PhysicalPlan::MemorySource { .. } => plan,
        PhysicalPlan::Filter { predicate, input } => PhysicalPlan::Filter {
            predicate,
            input: Box::new(cut(*input, producer, out)?),
        },
        PhysicalPlan::Projection { exprs, input } => PhysicalPlan::Projection {
            exprs,
            input: Box::new(cut(*input, producer, out)?),
        },
        PhysicalPlan::HashAggregate {
            mode: AggMode::Partial,
            groups,
            aggs,
            shape,
            input,
        } => PhysicalPlan::HashAggregate {
            mode: AggMode::Partial,
            groups,
            aggs,
            shape,
            input: Box::new(cut(*input, producer, out)?),
        },
        PhysicalPlan::Repartition {
            keys,
            partitions,
            input,
        } => PhysicalPlan::Repartition {
            keys,
            partitions,
            input: Box::new(cut(*input, producer, out)?),
        },
        PhysicalPlan::CoalesceBatches { input } => PhysicalPlan::CoalesceBatches {
            input: Box::new(cut(*input, producer, out)?),
        },
        PhysicalPlan::SinkAction { input } => PhysicalPlan::SinkAction {
            input: Box::new(cut(*input, producer, out)?),
        },
    })
}

fn check_leaves(roots: &[PhysicalPlan]) -> Result<(), PlannerError> {
    let leaves: Vec<_> = roots.iter().flat_map(|r| r.sources()).collect();
    for (i, (n, s)) in leaves.iter().enumerate() {
        if leaves[..i].iter().any(|(_, t)| t.fields() == s.fields()) {
            return Err(PlannerError::Unsupported(format!(
                "two inputs of one stage share the schema of {n}"
            )));
        }
    }
    Ok(())
}

/// Split `plan` into stages, breadth-first from the sink. Cuts sit between
/// partial and final aggregation and above the inputs of every join and
/// sort; each cut child is replaced by a `MemorySource` with its schema.
///
/// Group sizes are left at 1; see [`assign_groups`].
pub fn partition_plan(plan: &PhysicalPlan) -> Result<StageDag, PlannerError> {
    if !matches!(plan, PhysicalPlan::SinkAction { .. }) {
        return Err(PlannerError::Malformed("plan root must be SinkAction".into()));
    }
    plan.schema()?;
    // Stages found sink-first; ids are assigned source-first at the end.
    let mut found: Vec<Vec<PhysicalPlan>> = Vec::new();
    let mut queue: VecDeque<Vec<PhysicalPlan>> = VecDeque::from([vec![plan.clone()]]);
    while let Some(roots) = queue.pop_front() {
        let depth = found.len();
        let mut produced = Vec::new();
        let mut cut_roots = Vec::with_capacity(roots.len());
        let mut cutting = 0;
        for r in roots {
            let before = produced.len();
            // Placeholder names are fixed up once the depth is known.
            cut_roots.push(cut(r, depth, &mut produced)?);
            if produced.len() > before {
                cutting += 1;
            }
        }
        if cutting > 1 {
            return Err(PlannerError::Unsupported(
                "join inputs that need their own exchange are not supported".into(),
            ));
        }
        check_leaves(&cut_roots)?;
        found.push(cut_roots);
        if !produced.is_empty() {
            queue.push_back(produced);
        }
    }
    let n = found.len();
    for (depth, roots) in found.iter().enumerate() {
        let is_source = depth + 1 == n;
        for r in roots {
            for (name, _) in r.sources() {
                if is_placeholder(name) == is_source {
                    return Err(PlannerError::Unsupported(format!(
                        "source {name} would be read by a stage that also consumes a shuffle"
                    )));
                }
            }
        }
    }
    if n > 100 {
        return Err(PlannerError::Unsupported(format!("{n} stages exceed two-digit ids")));
    }
    let stages = found
        .into_iter()
        .rev()
        .enumerate()
        .map(|(id, outputs)| StagePlan {
            stage_id: id as u8,
            outputs: outputs.into_iter().map(|o| rename_leaves(o, n)).collect(),
            stateful: id > 0,
            group_size: 1,
            concurrency: if id > 0 { 1 } else { STATELESS_CONCURRENCY },
            input_partitions: 1,
            next: None,
        })
        .collect();
    Ok(StageDag { stages })
}

fn is_placeholder(name: &str) -> bool {
    name.strip_prefix("stage")
        .and_then(|r| r.split_once(".port"))
        .is_some_and(|(d, p)| d.parse::<usize>().is_ok() && p.parse::<usize>().is_ok())
}

/// Placeholders were named by discovery depth; rename them by the id of the
/// producing stage.
fn rename_leaves(plan: PhysicalPlan, n: usize) -> PhysicalPlan {
    fn go(p: &mut PhysicalPlan, n: usize) {
        if let PhysicalPlan::MemorySource { name, .. } = p {
            if let Some(rest) = name.strip_prefix("stage") {
                if let Some((d, port)) = rest.split_once(".port") {
                    if let Ok(depth) = d.parse::<usize>() {
                        *name = format!("stage{:02}.port{port}", n - 2 - depth);
                    }
                }
            }
            return;
        }
        match p {
            PhysicalPlan::HashJoin { left, right, .. } => {
                go(left, n);
                go(right, n);
            }
            PhysicalPlan::Filter { input, .. }
            | PhysicalPlan::Projection { input, .. }
            | PhysicalPlan::HashAggregate { input, .. }
            | PhysicalPlan::Sort { input, .. }
            | PhysicalPlan::Repartition { input, .. }
            | PhysicalPlan::CoalesceBatches { input }
            | PhysicalPlan::SinkAction { input } => go(input, n),
            PhysicalPlan::MemorySource { .. } => {}
        }
    }
    let mut plan = plan;
    go(&mut plan, n);
    plan
}

/// The whole plan as one stateful function that gathers all source data.
pub fn single_stage(plan: &PhysicalPlan) -> Result<StageDag, PlannerError> {
    if !matches!(plan, PhysicalPlan::SinkAction { .. }) {
        return Err(PlannerError::Malformed("plan root must be SinkAction".into()));
    }
    plan.schema()?;
    check_leaves(std::slice::from_ref(plan))?;
    Ok(StageDag {
        stages: vec![StagePlan {
            stage_id: 0,
            outputs: vec![plan.clone()],
            stateful: true,
            group_size: 1,
            concurrency: 1,
            input_partitions: 1,
            next: None,
        }],
    })
}

/// Size the function groups and wire each stage to its successor. A stage
/// fed by a keyed repartition gets `group_size_stateful` members and the
/// producer emits that many partitions; a coalesced input gets one member.
pub fn assign_groups(
    dag: &StageDag,
    group_size_stateful: usize,
    query_code: &str,
) -> Result<StageDag, PlannerError> {
    if !(1..=MAX_GROUP_SIZE).contains(&group_size_stateful) {
        return Err(PlannerError::InvalidGroupSize(group_size_stateful));
    }
    let mut stages = dag.stages.clone();
    for i in 1..stages.len() {
        let keyed = stages[i - 1]
            .outputs
            .iter()
            .all(|o| matches!(o, PhysicalPlan::Repartition { keys, .. } if !keys.is_empty()));
        let g = if keyed { group_size_stateful } else { 1 };
        for o in &mut stages[i - 1].outputs {
            if let PhysicalPlan::Repartition { partitions, .. } = o {
                *partitions = g;
            }
        }
        stages[i].group_size = g;
        stages[i].input_partitions = g;
        stages[i].concurrency = 1;
    }
    for s in &mut stages {
        if !s.stateful {
            s.group_size = 1;
            s.concurrency = STATELESS_CONCURRENCY;
        }
    }
    for i in 0..stages.len().saturating_sub(1) {
        let next = &stages[i + 1];
        stages[i].next = Some(FunctionGroup {
            query_code: query_code.to_string(),
            stage_id: next.stage_id,
            size: next.group_size,
        });
    }
    Ok(StageDag { stages })
}
