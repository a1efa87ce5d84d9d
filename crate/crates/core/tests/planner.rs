use std::sync::Arc;

use proptest::prelude::*;
use squall::planner::{
    assign_groups, decode_context, encode_context, partition_plan, query_code, stage_contexts, AggMode,
    EnvEncoding, FunctionName, PhysicalPlan, PlanBuilder, PlannerError, StageDag, ENV_LIMIT,
};
use squall::payload::InvocationMode;
use squall::query::{col, lit, AggExpr, AggFunc, AggShape, Field, RecordBatch, ScalarType, Schema, SortKey, Value};
use squall::sim::{ObjectStorage, ObjectStore};
use squall::workloads::nexmark::{gen_nexmark, to_batches};
use squall::workloads::QueryId;

fn t_schema() -> Schema {
    Schema::new(vec![
        Field::new("k", ScalarType::Int64, false),
        Field::new("v", ScalarType::Int64, false),
        Field::new("s", ScalarType::Utf8, false),
    ])
    .unwrap()
}

fn u_schema() -> Schema {
    Schema::new(vec![Field::new("uk", ScalarType::Int64, false), Field::new("w", ScalarType::Int64, false)]).unwrap()
}

/// Run a grouped dag the way the functions would: stage 0 once per input
/// chunk, every later stage once per group member, each member reading its
/// own partition from every producer.
fn run_dag(dag: &StageDag, chunks: &[Vec<RecordBatch>]) -> RecordBatch {
    // Outputs of the current producers: producer -> port -> partitions.
    let mut produced: Vec<Vec<Vec<RecordBatch>>> = chunks
        .iter()
        .map(|inputs| dag.stages[0].outputs.iter().map(|o| o.execute_partitioned(inputs).unwrap()).collect())
        .collect();
    for stage in &dag.stages[1..] {
        produced = (0..stage.group_size)
            .map(|m| {
                let inputs: Vec<RecordBatch> = produced
                    .iter()
                    .flat_map(|ports| ports.iter().map(|parts| parts[m].clone()))
                    .collect();
                stage.outputs.iter().map(|o| o.execute_partitioned(&inputs).unwrap()).collect()
            })
            .collect();
    }
    let out: Vec<RecordBatch> = produced.into_iter().flat_map(|ports| ports.into_iter().flatten()).collect();
    let schema = Arc::new(out[0].schema().as_ref().clone());
    RecordBatch::concat(&schema, &out).unwrap()
}

fn sorted_rows(b: &RecordBatch) -> Vec<Vec<Value>> {
    let mut rows = b.rows();
    rows.sort();
    rows
}

fn sum(c: &str, name: &str) -> AggExpr {
    AggExpr::new(AggFunc::Sum, col(c), name)
}

/// A small grammar of query shapes over tables `t` and `u`.
fn shaped_plan(shape: u8, threshold: i64) -> PhysicalPlan {
    let t = PlanBuilder::source("t", t_schema()).filter(col("v").gt(lit(threshold))).unwrap();
    let b = match shape {
        0 => t.project(vec![(col("k"), "k"), (col("v").mul(lit(3i64)), "v3")]).unwrap(),
        1 => t
            .aggregate(
                vec![(col("s"), "s")],
                vec![sum("v", "total"), AggExpr::new(AggFunc::Avg, col("v"), "mean"), AggExpr::new(AggFunc::Count, col("k"), "n")],
            )
            .unwrap(),
        2 => t
            .aggregate(vec![(col("k"), "k"), (col("s"), "s")], vec![AggExpr::new(AggFunc::Max, col("v"), "top")])
            .unwrap()
            .aggregate(vec![(col("s"), "s")], vec![AggExpr::new(AggFunc::Min, col("top"), "low")])
            .unwrap(),
        3 => t
            .join(PlanBuilder::source("u", u_schema()), "k", "uk", Some(col("w").lt_eq(col("v"))))
            .unwrap()
            .aggregate(vec![(col("uk"), "uk")], vec![sum("w", "w_sum")])
            .unwrap(),
        4 => t.aggregate(vec![], vec![sum("v", "all")]).unwrap(),
        _ => t
            .aggregate(vec![(col("k"), "k")], vec![sum("v", "total")])
            .unwrap()
            .sort(vec![SortKey::desc("total"), SortKey::asc("k")])
            .unwrap(),
    };
    b.build()
}

fn t_batch(rows: &[(i64, i64, u8)]) -> RecordBatch {
    let values: Vec<Vec<Value>> = rows
        .iter()
        .map(|&(k, v, s)| vec![Value::Int64(k), Value::Int64(v), Value::Utf8(format!("s{s}"))])
        .collect();
    RecordBatch::from_rows(Arc::new(t_schema()), &values).unwrap()
}

fn u_batch(rows: &[(i64, i64)]) -> RecordBatch {
    let values: Vec<Vec<Value>> = rows.iter().map(|&(k, w)| vec![Value::Int64(k), Value::Int64(w)]).collect();
    RecordBatch::from_rows(Arc::new(u_schema()), &values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partitioned_execution_equals_single_pass(
        shape in 0u8..6,
        threshold in -50i64..50,
        t in prop::collection::vec((0i64..15, -100i64..100, 0u8..5), 0..300),
        u in prop::collection::vec((0i64..15, -100i64..100), 0..100),
        chunks in 1usize..6,
        g in 1usize..9,
    ) {
        let plan = shaped_plan(shape, threshold);
        let dag = assign_groups(&partition_plan(&plan).unwrap(), g, &query_code(&plan)).unwrap();
        let (tb, ub) = (t_batch(&t), u_batch(&u));
        let oracle = plan.execute(&[tb.clone(), ub.clone()]).unwrap();
        // Stage 0 instances each see one slice of each table.
        let slice = |b: &RecordBatch, i: usize| {
            let step = b.num_rows().div_ceil(chunks);
            let off = (i * step).min(b.num_rows());
            b.slice(off, step.min(b.num_rows() - off))
        };
        let inputs: Vec<Vec<RecordBatch>> = (0..chunks).map(|i| vec![slice(&tb, i), slice(&ub, i)]).collect();
        let got = run_dag(&dag, &inputs);
        if shape == 5 {
            prop_assert_eq!(got.rows(), oracle.rows());
        } else {
            prop_assert_eq!(sorted_rows(&got), sorted_rows(&oracle));
        }
    }
}

#[test]
fn auction_query_four_stages_matches_oracle() {
    let plan = QueryId::Q4.plan().unwrap();
    let log = gen_nexmark(20_000, 2_000, 3);
    let [p, a, b] = to_batches(log.events()).unwrap();
    let oracle = plan.execute(&[p.clone(), a.clone(), b.clone()]).unwrap();
    assert!(oracle.num_rows() > 0);
    let dag = partition_plan(&plan).unwrap();
    assert_eq!(dag.stages.len(), 4);
    for g in [1, 3, 8] {
        let grouped = assign_groups(&dag, g, &query_code(&plan)).unwrap();
        let got = run_dag(&grouped, &[vec![p.clone(), a.slice(0, 300), b.slice(0, 9000)], vec![a.slice(300, a.num_rows() - 300), b.slice(9000, b.num_rows() - 9000)]]);
        assert_eq!(sorted_rows(&got), sorted_rows(&oracle), "group size {g}");
    }
}

#[test]
fn filter_only_is_one_stage() {
    let plan = PlanBuilder::source("t", t_schema()).filter(col("v").gt(lit(0i64))).unwrap().build();
    let PhysicalPlan::SinkAction { input } = &plan else { panic!("root is not the sink") };
    assert!(matches!(**input, PhysicalPlan::Filter { ref input, .. } if matches!(**input, PhysicalPlan::MemorySource { .. })));
    let dag = partition_plan(&plan).unwrap();
    assert_eq!(dag.stages.len(), 1);
    assert!(dag.edges().is_empty());
}

#[test]
fn partial_aggregate_alone_does_not_split() {
    let groups = vec![(col("k"), "k".to_string())];
    let aggs = vec![sum("v", "total")];
    let shape = AggShape::resolve(&t_schema(), &groups, &aggs).unwrap();
    let plan = PhysicalPlan::SinkAction {
        input: Box::new(PhysicalPlan::HashAggregate {
            mode: AggMode::Partial,
            groups,
            aggs,
            shape,
            input: Box::new(PhysicalPlan::MemorySource { name: "t".into(), schema: t_schema() }),
        }),
    };
    assert_eq!(partition_plan(&plan).unwrap().stages.len(), 1);
}

#[test]
fn unknown_column_is_rejected() {
    let err = PlanBuilder::source("t", t_schema()).project(vec![(col("price"), "p")]).unwrap_err();
    assert!(matches!(err, PlannerError::Query(_)), "{err}");
    assert!(PlanBuilder::source("t", t_schema()).filter(col("nope").eq(lit(1i64))).is_err());
}

#[test]
fn filters_are_pushed_below_joins() {
    let plan = PlanBuilder::source("t", t_schema())
        .join(PlanBuilder::source("u", u_schema()), "k", "uk", None)
        .unwrap()
        .filter(col("w").gt(lit(5i64)))
        .unwrap()
        .build();
    let PhysicalPlan::SinkAction { input } = &plan else { panic!() };
    let PhysicalPlan::HashJoin { right, .. } = &**input else { panic!("filter stayed above the join: {input:?}") };
    assert!(matches!(**right, PhysicalPlan::Filter { .. }));
}

#[test]
fn group_sizes() {
    let plan = QueryId::Q4.plan().unwrap();
    let qc = query_code(&plan);
    let dag = assign_groups(&partition_plan(&plan).unwrap(), 8, &qc).unwrap();
    let sizes: Vec<usize> = dag.stages.iter().map(|s| s.group_size).collect();
    assert_eq!(sizes, [1, 8, 8, 8]);
    assert_eq!(dag.stages[0].concurrency, 1000);
    assert!(dag.stages[1..].iter().all(|s| s.concurrency == 1 && s.stateful));
    assert!(dag.sink().next.is_none());

    // The sort stage gathers everything in one member.
    let q5 = QueryId::Q5.plan().unwrap();
    let dag5 = assign_groups(&partition_plan(&q5).unwrap(), 8, &query_code(&q5)).unwrap();
    assert_eq!(dag5.sink().group_size, 1);

    let stateless = QueryId::Q1.plan().unwrap();
    let dag1 = assign_groups(&partition_plan(&stateless).unwrap(), 8, "ab").unwrap();
    assert!(dag1.stages.iter().all(|s| s.group_size == 1));

    assert_eq!(assign_groups(&dag, 0, &qc).unwrap_err(), PlannerError::InvalidGroupSize(0));
}

#[test]
fn function_names() {
    let plan = QueryId::Q4.plan().unwrap();
    let qc = query_code(&plan);
    assert_eq!(qc.len(), 8);
    let dag = assign_groups(&partition_plan(&plan).unwrap(), 8, &qc).unwrap();
    let grammar = |s: &str| {
        let parts: Vec<&str> = s.split('-').collect();
        parts.len() == 3
            && !parts[0].is_empty()
            && parts[0].bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
            && parts[1..].iter().all(|p| p.len() == 2 && p.bytes().all(|b| b.is_ascii_digit()))
    };
    for s in &dag.stages[..3] {
        for m in s.next.as_ref().unwrap().members() {
            let name = m.to_string();
            assert!(grammar(&name), "{name}");
            assert_eq!(name.parse::<FunctionName>().unwrap(), m);
        }
    }
    assert_eq!(dag.stages[0].next.as_ref().unwrap().member(7).to_string(), format!("{qc}-01-07"));
    assert!("xyz-01-02".parse::<FunctionName>().is_err());
    assert!("ab-1-02".parse::<FunctionName>().is_err());
}

#[test]
fn replanning_is_byte_identical() {
    for q in QueryId::ALL {
        let (a, b) = (q.plan().unwrap(), q.plan().unwrap());
        assert_eq!(query_code(&a), query_code(&b));
        let da = assign_groups(&partition_plan(&a).unwrap(), 8, &query_code(&a)).unwrap();
        let db = assign_groups(&partition_plan(&b).unwrap(), 8, &query_code(&b)).unwrap();
        assert_eq!(serde_json::to_vec(&da).unwrap(), serde_json::to_vec(&db).unwrap());
    }
    let codes: std::collections::BTreeSet<String> = QueryId::ALL.iter().map(|q| query_code(&q.plan().unwrap())).collect();
    assert_eq!(codes.len(), QueryId::ALL.len());
}

#[test]
fn contexts_round_trip() {
    let plan = QueryId::Q4.plan().unwrap();
    let qc = query_code(&plan);
    let dag = assign_groups(&partition_plan(&plan).unwrap(), 8, &qc).unwrap();
    let mut store = ObjectStore::new();
    for ctx in stage_contexts(&dag, &qc, QueryId::Q4.window(), InvocationMode::Async) {
        let env = encode_context(&ctx, ENV_LIMIT, &mut store).unwrap();
        assert!(matches!(env, EnvEncoding::Inline { .. }));
        assert_eq!(decode_context(&env, &mut store).unwrap(), ctx);
        // Forced out of the environment, it comes back from the store.
        let env = encode_context(&ctx, 16, &mut store).unwrap();
        let EnvEncoding::Indirect { ref key, .. } = env else { panic!("expected indirect") };
        assert_eq!(decode_context(&env, &mut store).unwrap(), ctx);
        store.delete(key).unwrap();
        assert!(decode_context(&env, &mut store).is_err());
    }
}

#[test]
fn windowless_context_round_trip() {
    let plan = QueryId::Q2.plan().unwrap();
    let qc = query_code(&plan);
    let dag = assign_groups(&partition_plan(&plan).unwrap(), 8, &qc).unwrap();
    let ctx = stage_contexts(&dag, &qc, None, InvocationMode::Sync).remove(0);
    let mut store = ObjectStore::new();
    let env = encode_context(&ctx, ENV_LIMIT, &mut store).unwrap();
    assert_eq!(decode_context(&env, &mut store).unwrap(), ctx);
    assert!(store.is_empty());

    let EnvEncoding::Inline { codec, mut bytes } = env else { panic!() };
    let n = bytes.len();
    bytes.truncate(n / 2);
    assert!(decode_context(&EnvEncoding::Inline { codec, bytes }, &mut store).is_err());
}
