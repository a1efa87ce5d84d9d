//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any failed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::panic::catch_unwind;
use std::process::ExitCode;
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use squall::payload::{
    check_cap, decode_payload, encode_payload, split_for_invocation, Codec, InvocationMode,
    PayloadMeta, Qid, Uuid, ASYNC_CAP, SYNC_CAP,
};
use squall::planner::{
    assign_groups, encode_context, partition_plan, query_code, single_stage, CloudContext,
    EnvEncoding, FunctionGroup, PhysicalPlan, PlanBuilder, ENV_LIMIT,
};
use squall::query::{col, Column, Field, RecordBatch, ScalarType, Schema, Value};
use squall::runtime::{backoff_wait, HashRing, RetryPolicy, StageFunction, BASE_MS, JITTER_MS};
use squall::sim::{
    billed_ms, detail_field, Arch, BillingModel, Dollars, FunctionDef, HandlerError, Invocation,
    Platform, SimConfig, SimError, TraceKind,
};
use squall::workloads::nexmark::{bid_schema, gen_nexmark, to_batches};
use squall::workloads::oracle::canonical;
use squall::workloads::{run_benchmark, BenchConfig, BenchRun, ExecMode, QueryId, SinkResults};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

type Check = (u32, &'static str, u64, fn() -> Outcome);

const CRITERIA: [Check; 11] = [
    (1, "plan partitioning", 1, plan_partitioning),
    (2, "cost-formula identity", 10, cost_formula_identity),
    (3, "pricing anchors", 1, pricing_anchors),
    (4, "payload caps", 60, payload_caps),
    (5, "exactly-once under duplication", 60, exactly_once_under_duplication),
    (6, "routing determinism", 5, routing_determinism),
    (7, "backoff bounds", 1, backoff_bounds),
    (8, "recovery at every trace index", 300, recovery_at_every_index),
    (9, "oracle equivalence matrix", 300, oracle_equivalence_matrix),
    (10, "centralized vs distributed direction", 600, centralized_vs_distributed),
    (11, "context encoding", 5, context_encoding),
];

fn criterion(n: u32, name: &str, budget: Duration, f: fn() -> Outcome) -> bool {
    let t = Instant::now();
    let out = catch_unwind(f).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(ToString::to_string))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let took = t.elapsed();
    let out = match out {
        Ok(detail) if took > budget => Err(format!("{detail}; took {took:.1?}, budget {budget:?}")),
        other => other,
    };
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n:>2} {tag} {name} [{:.2}s] {detail}", took.as_secs_f64());
    out.is_ok()
}

/// Runs every criterion, or only those numbered on the command line.
fn main() -> ExitCode {
    let only: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let results: Vec<bool> = CRITERIA
        .iter()
        .filter(|(n, ..)| only.is_empty() || only.contains(n))
        .map(|&(n, name, budget, f)| criterion(n, name, Duration::from_secs(budget), f))
        .collect();
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// 1 ------------------------------------------------------------------------

fn plan_partitioning() -> Outcome {
    let plan = QueryId::Q4.plan().map_err(|e| e.to_string())?;
    // Join, then max per auction, then average per category.
    let ops: Vec<&str> = plan
        .operators()
        .into_iter()
        .filter(|o| o.starts_with("Hash"))
        .collect();
    ensure!(
        ops == [
            "HashAggregate(final)",
            "HashAggregate(partial)",
            "HashAggregate(final)",
            "HashAggregate(partial)",
            "HashJoin"
        ],
        "unexpected operator shape {ops:?}"
    );
    let dag = partition_plan(&plan).map_err(|e| e.to_string())?;
    ensure!(dag.stages.len() == 4, "{} stages, want 4", dag.stages.len());
    let originals: BTreeSet<&str> = plan.sources().into_iter().map(|(n, _)| n).collect();
    for (i, stage) in dag.stages.iter().enumerate() {
        ensure!(stage.stage_id as usize == i, "stage {i} has id {}", stage.stage_id);
        for (name, schema) in stage.sources() {
            if i == 0 {
                ensure!(originals.contains(name), "stage 0 reads unknown source {name}");
                continue;
            }
            let port: usize = name
                .strip_prefix(&format!("stage{:02}.port", i - 1))
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| format!("stage {i} leaf {name} is not a placeholder for stage {}", i - 1))?;
            let producer = &dag.stages[i - 1].outputs[port];
            let cut = producer.children()[0].schema().map_err(|e| e.to_string())?;
            ensure!(
                &cut == schema,
                "placeholder {name} schema differs from the cut child's schema"
            );
            ensure!(
                matches!(producer, PhysicalPlan::Repartition { .. } | PhysicalPlan::CoalesceBatches { .. }),
                "stage {} port {port} does not end in an exchange",
                i - 1
            );
        }
    }
    ensure!(dag.sink().is_sink(), "last stage is not the sink");
    let qc = query_code(&plan);
    let grouped = assign_groups(&dag, 8, &qc).map_err(|e| e.to_string())?;
    let next = grouped.stages[0].next.as_ref().ok_or("stage 0 has no next group")?;
    ensure!(
        next.to_string() == format!("Group({qc}-01, 8)"),
        "stage 0 routes to {next}"
    );
    Ok(format!("4 stages, placeholders carry cut schemas, next {next}"))
}

// 2 ------------------------------------------------------------------------

struct ChainStage {
    name: String,
    raw_us: u64,
    memory_mb: u32,
    arch: Arch,
}

fn run_chain(stages: &[ChainStage], mode: InvocationMode) -> Result<Platform, String> {
    let mut p = Platform::new(SimConfig::instantaneous());
    for (i, s) in stages.iter().enumerate() {
        let next = stages.get(i + 1).map(|n| n.name.clone());
        let raw = s.raw_us;
        let handler = move |inv: &mut Invocation<'_>, payload: &[u8]| -> Result<Vec<u8>, HandlerError> {
            inv.compute(raw);
            if let Some(n) = &next {
                match mode {
                    InvocationMode::Sync => {
                        inv.invoke_sync(n, payload)?;
                    }
                    InvocationMode::Async => inv.invoke_async(n, payload)?,
                }
            }
            Ok(Vec::new())
        };
        let def = FunctionDef::new(s.name.clone(), EnvEncoding::Indirect {
            codec: Codec::None,
            key: String::new(),
        })
        .memory(s.memory_mb)
        .arch(s.arch);
        p.create_function(def, Rc::new(handler)).map_err(|e| e.to_string())?;
    }
    match mode {
        InvocationMode::Sync => {
            p.invoke_sync(&stages[0].name, b"x").map_err(|e| e.to_string())?;
        }
        InvocationMode::Async => {
            p.invoke_async(&stages[0].name, b"x").map_err(|e| e.to_string())?;
        }
    }
    p.run_until_quiescent().map_err(|e| e.to_string())?;
    Ok(p)
}

fn cost_formula_identity() -> Outcome {
    let prices = BillingModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let n = rng.gen_range(1..=6);
        let stages: Vec<ChainStage> = (0..n)
            .map(|i| ChainStage {
                name: format!("f{i}"),
                raw_us: rng.gen_range(1..=250_000),
                memory_mb: [128, 512, 1024, 2048, 3008, 10_240][rng.gen_range(0..6)],
                arch: if rng.gen() { Arch::Arm } else { Arch::X86 },
            })
            .collect();
        // d(f_i): each stage's own time, rounded up to whole milliseconds.
        let d: Vec<u64> = stages.iter().map(|s| s.raw_us.div_ceil(1000)).collect();
        let lambda = prices.per_request.times(n as u128);
        for mode in [InvocationMode::Async, InvocationMode::Sync] {
            let p = run_chain(&stages, mode)?;
            let bill = p.billing_report();
            let billed: Vec<u64> = match mode {
                InvocationMode::Async => d.clone(),
                InvocationMode::Sync => (0..n).map(|i| d[i..].iter().sum()).collect(),
            };
            let want_ms: u64 = billed.iter().sum();
            let want_dollars = lambda
                + stages
                    .iter()
                    .zip(&billed)
                    .map(|(s, &ms)| prices.duration_cost(s.arch, s.memory_mb, ms))
                    .sum::<Dollars>();
            ensure!(
                bill.total_billed_ms() == want_ms,
                "case {case} {mode}: billed {} ms, closed form {want_ms} ms",
                bill.total_billed_ms()
            );
            ensure!(
                bill.compute_dollars() == want_dollars,
                "case {case} {mode}: ${} billed, closed form ${want_dollars}",
                bill.compute_dollars()
            );
            for (s, &ms) in stages.iter().zip(&billed) {
                let got = bill.functions[&s.name].billed_ms;
                ensure!(got == ms, "case {case} {mode}: {} billed {got} ms, want {ms}", s.name);
            }
        }
    }
    Ok("1000 random chains match both closed forms to the ms and the exact dollar".into())
}

// 3 ------------------------------------------------------------------------

fn pricing_anchors() -> Outcome {
    let prices = BillingModel::default();
    let arm = prices.duration_cost(Arch::Arm, 512, 1000);
    let x86 = prices.duration_cost(Arch::X86, 512, 1000);
    ensure!(arm == Dollars::parse("0.0000067").unwrap(), "arm 1000 ms at 512 MB costs {arm}");
    ensure!(x86 == Dollars::parse("0.0000083").unwrap(), "x86 1000 ms at 512 MB costs {x86}");
    ensure!(billed_ms(300) == 1, "0.3 ms bills as {} ms", billed_ms(300));

    let stage = ChainStage {
        name: "short".into(),
        raw_us: 300,
        memory_mb: 512,
        arch: Arch::Arm,
    };
    let p = run_chain(std::slice::from_ref(&stage), InvocationMode::Sync)?;
    let bill = &p.billing_report().functions["short"];
    ensure!(bill.billed_ms == 1, "simulated 0.3 ms request billed {} ms", bill.billed_ms);
    ensure!(
        bill.duration_cost == Dollars::parse("0.0000000067").unwrap(),
        "simulated 1 ms at 512 MB arm costs {}",
        bill.duration_cost
    );
    Ok(format!("arm ${arm}, x86 ${x86}, 0.3 ms -> 1 ms"))
}

// 4 ------------------------------------------------------------------------

fn random_text_batch(rows: usize, width: usize, seed: u64) -> RecordBatch {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::new(vec![
        Field::new("id", ScalarType::Int64, false),
        Field::new("body", ScalarType::Utf8, false),
    ])
    .unwrap();
    let ids: Vec<i64> = (0..rows as i64).collect();
    let bodies: Vec<String> = (0..rows)
        .map(|_| (0..width).map(|_| ALPHABET[rng.gen_range(0..64)] as char).collect())
        .collect();
    RecordBatch::try_new(schema.into(), vec![Column::int64(ids), Column::utf8(bodies)]).unwrap()
}

fn payload_caps() -> Outcome {
    let mut p = Platform::new(SimConfig::instantaneous());
    let def = FunctionDef::new("sink", EnvEncoding::Indirect {
        codec: Codec::None,
        key: String::new(),
    });
    p.create_function(def, Rc::new(|_: &mut Invocation<'_>, _: &[u8]| Ok(Vec::new())))
        .map_err(|e| e.to_string())?;
    for (mode, cap) in [(InvocationMode::Sync, SYNC_CAP), (InvocationMode::Async, ASYNC_CAP)] {
        ensure!(cap == mode.cap(), "{mode} cap {}", mode.cap());
        let over = vec![b'x'; cap + 1];
        let at_cap = vec![b'x'; cap];
        let sent = match mode {
            InvocationMode::Sync => p.invoke_sync("sink", &over).map(|_| ()),
            InvocationMode::Async => p.invoke_async("sink", &over),
        };
        ensure!(
            matches!(sent, Err(SimError::PayloadTooLarge { .. })),
            "{mode} accepted {} bytes",
            cap + 1
        );
        ensure!(check_cap(&over, mode).is_err(), "{mode} cap check passed {} bytes", cap + 1);
        ensure!(check_cap(&at_cap, mode).is_ok(), "{mode} cap check rejected {cap} bytes");
    }
    ensure!(SYNC_CAP == 6 * 1024 * 1024 && ASYNC_CAP == 256 * 1024, "caps are not 6 MiB / 256 KiB");

    // Random text barely compresses, so the envelope is about the logical size.
    let probe = random_text_batch(1000, 1000, 4);
    let qid = Qid::new("c0ffee", "split", 0).unwrap();
    let meta = PayloadMeta::new(Uuid::new(qid, 1, 1).unwrap(), 0, 1);
    let codec = Codec::default();
    let per_row = encode_payload(probe.schema(), std::slice::from_ref(&probe), &meta, codec)
        .map_err(|e| e.to_string())?
        .len() as f64
        / 1000.0;
    let rows = (15_000_000.0 / per_row) as usize;
    let batch = random_text_batch(rows, 1000, 4);
    let whole = encode_payload(batch.schema(), std::slice::from_ref(&batch), &meta, codec)
        .map_err(|e| e.to_string())?
        .len();

    let mut counts = BTreeMap::new();
    for mode in [InvocationMode::Sync, InvocationMode::Async] {
        let pieces = split_for_invocation(batch.schema(), std::slice::from_ref(&batch), &meta, mode, codec)
            .map_err(|e| e.to_string())?;
        let mut decoded = Vec::new();
        for (i, bytes) in pieces.iter().enumerate() {
            ensure!(bytes.len() <= mode.cap(), "{mode} piece {i} has {} bytes", bytes.len());
            let (bs, m) = decode_payload(bytes).map_err(|e| e.to_string())?;
            ensure!(
                m.uuid.seq_num == i as u32 + 1 && m.uuid.seq_len == pieces.len() as u32,
                "{mode} piece {i} numbered {}/{}",
                m.uuid.seq_num,
                m.uuid.seq_len
            );
            decoded.extend(bs);
        }
        let back = RecordBatch::concat(batch.schema(), &decoded).map_err(|e| e.to_string())?;
        ensure!(back == batch, "{mode} split does not reassemble losslessly");
        counts.insert(mode.to_string(), pieces.len());
    }
    let (sync, asynchronous) = (counts["sync"], counts["async"]);
    ensure!(sync == 3, "{whole} byte partition became {sync} sync payloads, want 3");
    ensure!(
        (54..=66).contains(&asynchronous),
        "{whole} byte partition became {asynchronous} async payloads, want 60 +/- 10%"
    );
    Ok(format!(
        "caps enforced; {:.1} MB partition -> {sync} sync / {asynchronous} async, lossless",
        whole as f64 / 1e6
    ))
}

// 5 ------------------------------------------------------------------------

fn bits(rows: &squall::workloads::oracle::Rows) -> Vec<Vec<(u8, u64, String)>> {
    rows.iter()
        .map(|r| {
            r.iter()
                .map(|v| match v {
                    Value::Float64(f) => (1, f.to_bits(), String::new()),
                    Value::Int64(i) | Value::Timestamp(i) => (2, *i as u64, String::new()),
                    other => (3, 0, format!("{other:?}")),
                })
                .collect()
        })
        .collect()
}

fn bit_exact(query: QueryId, got: &SinkResults, want: &SinkResults) -> Result<(), String> {
    let keys: BTreeSet<&String> = got.keys().chain(want.keys()).collect();
    for k in keys {
        let norm = |r: Option<&squall::workloads::oracle::Rows>| {
            let r = r.cloned().unwrap_or_default();
            bits(&if query.ordered() { r } else { canonical(r) })
        };
        if norm(got.get(k)) != norm(want.get(k)) {
            return Err(format!("window {k} differs"));
        }
    }
    Ok(())
}

fn exactly_once_under_duplication() -> Outcome {
    let mut runs = 0;
    let mut duplicates = 0;
    for q in [QueryId::Q4, QueryId::Ysb] {
        for seed in 0..20 {
            let mut cfg = BenchConfig::new(q, ExecMode::Distributed, InvocationMode::Async);
            cfg.events = 1500;
            cfg.events_per_sec = 75;
            cfg.seed = seed;
            cfg.source_rows = 250;
            cfg.sim = SimConfig::default().seed(seed);
            let clean = run_benchmark(&cfg).map_err(|e| e.to_string())?;
            ensure!(clean.report.error.is_none(), "{q} seed {seed}: {:?}", clean.report.error);
            for prob in [0.2, 0.5, 1.0] {
                cfg.sim.duplicate_delivery_prob = prob;
                let run = run_benchmark(&cfg).map_err(|e| e.to_string())?;
                ensure!(run.report.error.is_none(), "{q} seed {seed} p={prob}: {:?}", run.report.error);
                bit_exact(q, &run.results, &run.reference)
                    .map_err(|e| format!("{q} seed {seed} p={prob} vs oracle: {e}"))?;
                bit_exact(q, &run.results, &clean.results)
                    .map_err(|e| format!("{q} seed {seed} p={prob} vs clean run: {e}"))?;
                duplicates += run.platform.trace().of_kind(TraceKind::Duplicate).count();
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs, {duplicates} duplicate deliveries, all bit-exact"))
}

// 6 ------------------------------------------------------------------------

fn routing_determinism() -> Outcome {
    let qc = "5eed1234";
    let group = FunctionGroup {
        query_code: qc.into(),
        stage_id: 1,
        size: 8,
    };
    let members: Vec<String> = group.members().iter().map(ToString::to_string).collect();
    let partitions = 2u32;

    // Producers build their ring independently on their own instances.
    let mut p = Platform::new(SimConfig::default());
    let ring_members = members.clone();
    let producer = move |inv: &mut Invocation<'_>, _: &[u8]| -> Result<Vec<u8>, HandlerError> {
        if inv.static_context().is_none() {
            let ring = HashRing::for_group(qc, ring_members.clone());
            *inv.static_context() = Some(Box::new(ring));
        }
        let slot = inv.static_context().take().expect("set above");
        let ring = slot.downcast_ref::<HashRing>().expect("ring");
        let routes: Vec<String> = (1..=partitions)
            .map(|k| format!("shuffle={k} dest={}", ring.destination(qc, 1, k)))
            .collect();
        *inv.static_context() = Some(slot);
        inv.compute(50_000);
        for r in routes {
            inv.record(r)?;
        }
        Ok(Vec::new())
    };
    p.create_function(
        FunctionDef::new(format!("{qc}-00-00"), EnvEncoding::Indirect {
            codec: Codec::None,
            key: String::new(),
        }),
        Rc::new(producer),
    )
    .map_err(|e| e.to_string())?;
    for _ in 0..4 {
        p.invoke_sync_at(0, &format!("{qc}-00-00"), b"batch").map_err(|e| e.to_string())?;
    }
    let mut instances = BTreeSet::new();
    let mut routes: BTreeMap<u32, BTreeSet<String>> = BTreeMap::new();
    for r in p.trace().of_kind(TraceKind::App) {
        instances.insert(r.instance);
        let k: u32 = detail_field(&r.detail, "shuffle").unwrap().parse().unwrap();
        routes.entry(k).or_default().insert(detail_field(&r.detail, "dest").unwrap().to_string());
    }
    ensure!(instances.len() >= 4, "only {} producer instances ran", instances.len());
    for (k, dests) in &routes {
        ensure!(dests.len() == 1, "shuffle {k} went to {dests:?}");
    }
    let idx = |k: u32| members.iter().position(|m| routes[&k].contains(m)).unwrap();
    ensure!(
        idx(2) == (idx(1) + 8 - 1) % 8,
        "shuffle 2 went to member {} after shuffle 1 went to {}",
        idx(2),
        idx(1)
    );

    // With as many partitions as members every member gets exactly one.
    let ring = HashRing::for_group(qc, members.clone());
    let start = ring.start(qc, 1);
    let all: Vec<usize> = (1..=8u32)
        .map(|k| members.iter().position(|m| m == ring.destination(qc, 1, k)).unwrap())
        .collect();
    let expected: Vec<usize> = (0..8).map(|j| (start + 8 - j) % 8).collect();
    ensure!(all == expected, "order {all:?}, want counterclockwise {expected:?}");
    Ok(format!(
        "{} instances agree; shuffle 1 -> member {:02}, shuffle 2 -> member {:02}",
        instances.len(),
        idx(1),
        idx(2)
    ))
}

// 7 ------------------------------------------------------------------------

fn backoff_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut resets = 0;
    for max in [1000u64, 250, 60] {
        let mut policy = RetryPolicy::new(max);
        let mut exact = RetryPolicy::new(max);
        for i in 0..10_000 {
            let before = policy.increase_factor;
            let f = if BASE_MS * before > max { 1 } else { before };
            if f < before {
                resets += 1;
            }
            let wait = policy.next_wait(&mut rng);
            ensure!(policy.increase_factor == f + 1, "max {max} sample {i}: factor {}", policy.increase_factor);
            ensure!(wait <= max, "max {max} sample {i}: wait {wait}");
            if wait < max {
                let r = wait.checked_sub(BASE_MS * f).ok_or(format!("wait {wait} below {}", BASE_MS * f))?;
                ensure!(r <= JITTER_MS, "max {max} sample {i}: jitter {r}");
            } else {
                ensure!(BASE_MS * f + JITTER_MS >= max, "max {max} sample {i}: clipped wait unreachable");
            }
            // The formula with the random part chosen here.
            let r = rng.gen_range(0..=JITTER_MS);
            let f = if BASE_MS * exact.increase_factor > max { 1 } else { exact.increase_factor };
            let w = backoff_wait(&mut exact, r);
            ensure!(w == (BASE_MS * f + r).min(max), "max {max}: wait {w} for f={f} r={r}");
        }
    }
    Ok(format!("30000 waits within min(50f + r, max); factor reset {resets} times"))
}

// 8 ------------------------------------------------------------------------

fn recovery_config() -> BenchConfig {
    let mut cfg = BenchConfig::new(QueryId::Q4, ExecMode::Distributed, InvocationMode::Async);
    cfg.events = 600;
    cfg.events_per_sec = 6;
    cfg.group_size = 4;
    cfg.source_rows = 50;
    cfg.seed = 8;
    cfg
}

fn recovery_at_every_index() -> Outcome {
    let cfg = recovery_config();
    let clean = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    ensure!(clean.report.epochs == 10, "clean run has {} epochs", clean.report.epochs);
    clean.verify()?;
    let len = clean.platform.trace().len() as u64;
    let mut relaunches = 0;
    for i in 0..len {
        let mut c = cfg.clone();
        c.sim.crash_at = Some(i);
        let run: BenchRun = run_benchmark(&c).map_err(|e| format!("crash at {i}: {e}"))?;
        ensure!(run.report.error.is_none(), "crash at {i}: {:?}", run.report.error);
        ensure!(run.report.launches >= 2, "crash at {i} did not fire");
        ensure!(run.results == clean.results, "crash at {i}: recovered sink differs");
        relaunches += run.report.launches - 1;
    }
    Ok(format!("{len} crash points over 10 epochs, {relaunches} relaunches, all outputs equal"))
}

// 9 ------------------------------------------------------------------------

fn oracle_equivalence_matrix() -> Outcome {
    let mut exact = 0;
    let mut total = 0;
    let mut failures = Vec::new();
    for q in QueryId::ALL {
        for mode in [ExecMode::Centralized, ExecMode::Distributed] {
            for invoke in [InvocationMode::Sync, InvocationMode::Async] {
                for seed in 1..=5 {
                    let mut cfg = BenchConfig::new(q, mode, invoke);
                    cfg.events = 10_000;
                    cfg.seed = seed;
                    total += 1;
                    match run_benchmark(&cfg) {
                        Ok(run) if run.report.error.is_none() => match run.verify() {
                            Ok(()) => exact += 1,
                            Err(e) => failures.push(format!("{q}/{mode}/{invoke}/{seed}: {e}")),
                        },
                        Ok(run) => failures.push(format!("{q}/{mode}/{invoke}/{seed}: {:?}", run.report.error)),
                        Err(e) => failures.push(format!("{q}/{mode}/{invoke}/{seed}: {e}")),
                    }
                }
            }
        }
    }
    ensure!(exact == 120 && total == 120, "{exact}/{total} exact; {}", failures.join("; "));
    Ok("120/120 exact".into())
}

// 10 -----------------------------------------------------------------------

fn centralized_vs_distributed() -> Outcome {
    let mut lines = Vec::new();
    for (q, events, eps) in [(QueryId::Q4, 4_000_000, 200_000), (QueryId::Ysb, 2_000_000, 100_000)] {
        let run = |mode| {
            let mut cfg = BenchConfig::new(q, mode, InvocationMode::Async);
            cfg.events = events;
            cfg.events_per_sec = eps;
            cfg.seed = 7;
            run_benchmark(&cfg).map_err(|e| e.to_string())
        };
        let c = run(ExecMode::Centralized)?.report;
        let d = run(ExecMode::Distributed)?.report;
        ensure!(c.error.is_none() && d.error.is_none(), "{q}: {:?} / {:?}", c.error, d.error);
        ensure!(
            d.latency_ms < c.latency_ms,
            "{q}: distributed latency {:.0} ms not below centralized {:.0} ms",
            d.latency_ms,
            c.latency_ms
        );
        if q == QueryId::Q4 {
            ensure!(
                d.billed_duration_ms > c.billed_duration_ms,
                "q4: distributed billed {} ms not above centralized {} ms",
                d.billed_duration_ms,
                c.billed_duration_ms
            );
        }
        lines.push(format!(
            "{q} latency {:.0}/{:.0} ms billed {}/{} ms",
            c.latency_ms, d.latency_ms, c.billed_duration_ms, d.billed_duration_ms
        ));
    }
    Ok(format!("centralized/distributed: {}", lines.join(", ")))
}

// 11 -----------------------------------------------------------------------

fn context_with_list(len: usize, seed: u64) -> (CloudContext, PhysicalPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list: Vec<Value> = (0..len).map(|_| Value::Int64(rng.gen())).collect();
    let plan = PlanBuilder::source("bid", bid_schema())
        .filter(col("auction").in_list(list))
        .unwrap()
        .build();
    let qc = query_code(&plan);
    let dag = assign_groups(&single_stage(&plan).unwrap(), 1, &qc).unwrap();
    let ctx = CloudContext::new(&qc, dag.stages[0].clone(), None, InvocationMode::Sync);
    (ctx, plan)
}

fn compressed_len(ctx: &CloudContext) -> usize {
    let mut scratch = squall::sim::ObjectStore::new();
    match encode_context(ctx, usize::MAX, &mut scratch).unwrap() {
        EnvEncoding::Inline { bytes, .. } => bytes.len(),
        EnvEncoding::Indirect { .. } => unreachable!("unbounded limit"),
    }
}

/// Deploy `ctx` as one function, send it the same batch twice and return the
/// platform.
fn serve_twice(ctx: &CloudContext) -> Result<(Platform, String), String> {
    let mut p = Platform::new(SimConfig::default());
    let env = encode_context(ctx, ENV_LIMIT, &mut p).map_err(|e| e.to_string())?;
    let name = FunctionGroup {
        query_code: ctx.query_code.clone(),
        stage_id: 0,
        size: 1,
    }
    .member(0)
    .to_string();
    p.create_function(
        FunctionDef::new(name.clone(), env).memory(1024),
        Rc::new(StageFunction::default()),
    )
    .map_err(|e| e.to_string())?;
    let events = gen_nexmark(200, 100, 1);
    let bids = to_batches(events.events()).map_err(|e| e.to_string())?[2].clone();
    for epoch in 0..2u64 {
        let qid = Qid::new(ctx.query_code.clone(), format!("e{epoch}"), 0).unwrap();
        let meta = PayloadMeta::new(Uuid::new(qid, 1, 1).unwrap(), epoch, 1);
        let bytes = encode_payload(bids.schema(), std::slice::from_ref(&bids), &meta, Codec::default())
            .map_err(|e| e.to_string())?;
        p.invoke_sync(&name, &bytes).map_err(|e| e.to_string())?;
    }
    Ok((p, name))
}

fn context_encoding() -> Outcome {
    // Largest plan whose compressed context still fits the environment.
    let (mut lo, mut hi) = (1usize, 4000usize);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if compressed_len(&context_with_list(mid, 11).0) <= ENV_LIMIT {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fits = context_with_list(lo, 11).0;
    let over = context_with_list(hi, 11).0;
    let mut scratch = squall::sim::ObjectStore::new();
    let fits_len = compressed_len(&fits);
    ensure!(
        matches!(encode_context(&fits, ENV_LIMIT, &mut scratch).unwrap(), EnvEncoding::Inline { .. }),
        "{fits_len} byte context not inline"
    );
    let over_len = compressed_len(&over);
    ensure!(
        matches!(encode_context(&over, ENV_LIMIT, &mut scratch).unwrap(), EnvEncoding::Indirect { .. }),
        "{over_len} byte context not indirect"
    );
    // Exactly at the limit is still inline.
    ensure!(
        matches!(encode_context(&fits, fits_len, &mut scratch).unwrap(), EnvEncoding::Inline { .. }),
        "context of exactly the limit not inline"
    );
    ensure!(
        matches!(encode_context(&fits, fits_len - 1, &mut scratch).unwrap(), EnvEncoding::Indirect { .. }),
        "context one byte over the limit not indirect"
    );

    // A plan of about 82 KB.
    let mut n = 1000;
    let (big, _) = loop {
        let (ctx, plan) = context_with_list(n, 12);
        if serde_json::to_vec(&ctx).unwrap().len() >= 82_000 {
            break (ctx, plan);
        }
        n += 20;
    };
    let big_json = serde_json::to_vec(&big).unwrap().len();
    let (small, _) = context_with_list(8, 12);

    let count_reads = |ctx: &CloudContext| -> Result<(usize, u64, usize), String> {
        let (p, name) = serve_twice(ctx)?;
        let key = ctx.object_key();
        let ctx_gets = p
            .trace()
            .of_kind(TraceKind::StoreGet)
            .filter(|r| r.function == name && detail_field(&r.detail, "key") == Some(key.as_str()))
            .count();
        let inits = p
            .trace()
            .of_kind(TraceKind::App)
            .filter(|r| r.detail.starts_with("init"))
            .count();
        Ok((ctx_gets, p.store().reads, inits))
    };
    let (big_gets, big_reads, big_inits) = count_reads(&big)?;
    let (small_gets, small_reads, small_inits) = count_reads(&small)?;
    ensure!(big_inits == 1 && small_inits == 1, "instances initialised {big_inits}/{small_inits} times");
    ensure!(big_gets == 1, "{big_json} byte context read {big_gets} times at init");
    ensure!(small_gets == 0, "inline context read {small_gets} times");
    ensure!(
        big_reads == small_reads + 1,
        "indirect context billed {big_reads} reads, inline {small_reads}"
    );
    Ok(format!(
        "{fits_len} B inline, {over_len} B indirect, {} KB plan indirect with 1 extra read",
        big_json / 1000
    ))
}
