use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nexmark::{self, NexmarkEvent};
use super::oracle::{self, canonical, Rows};
use super::queries::QueryId;
use super::ysb::{self, YsbEvent};
use super::WorkloadError;
use crate::fault::keys::{result_key, result_prefix};
use crate::fault::{drive, is_committed, EpochRunner, EventLog, Recovery, ReplayableSource};
use crate::payload::{decode_payload, encode_payload, split_rows, Codec, InvocationMode, PayloadMeta, Qid, Uuid};
use crate::planner::{
    assign_groups, encode_context, partition_plan, query_code, single_stage, CloudContext, FunctionGroup,
    PhysicalPlan, StageDag, DEFAULT_GROUP_SIZE, ENV_LIMIT,
};
use crate::query::{RecordBatch, Schema};
use crate::runtime::sink::{emit, window_label};
use crate::runtime::{CostModel, RetryPolicy, StageFunction};
use crate::sim::{Arch, Dollars, FunctionDef, ObjectStorage, ObjectStore, Platform, SimConfig, SimError, TraceKind};

/// Launches after a crash before the driver gives up.
const MAX_LAUNCHES: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecMode {
    /// The whole plan in one function.
    Centralized,
    /// One function group per stage.
    Distributed,
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecMode::Centralized => "centralized",
            ExecMode::Distributed => "distributed",
        })
    }
}

impl FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralized" => Ok(ExecMode::Centralized),
            "distributed" => Ok(ExecMode::Distributed),
            other => Err(format!("unknown mode {other:?}; expected centralized or distributed")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub query: QueryId,
    pub mode: ExecMode,
    pub invoke: InvocationMode,
    pub memory_mb: u32,
    pub arch: Arch,
    pub events: u64,
    pub events_per_sec: u64,
    pub seed: u64,
    /// Members per stateful group in distributed mode.
    pub group_size: usize,
    /// Largest source chunk handed to one source invocation in distributed
    /// mode; payload caps may cut chunks further. Zero sizes chunks by the
    /// payload cap alone, as in centralized mode.
    pub source_rows: usize,
    /// Checkpoint after every this many epochs.
    pub checkpoint_every: u64,
    pub cost: CostModel,
    pub sim: SimConfig,
}

impl BenchConfig {
    pub fn new(query: QueryId, mode: ExecMode, invoke: InvocationMode) -> Self {
        BenchConfig {
            query,
            mode,
            invoke,
            memory_mb: 2048,
            arch: Arch::Arm,
            events: 10_000,
            events_per_sec: 1_000,
            seed: 1,
            group_size: DEFAULT_GROUP_SIZE,
            source_rows: 0,
            checkpoint_every: 1,
            cost: CostModel::default(),
            sim: SimConfig::default(),
        }
    }
}

/// Generated input of a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Nexmark(EventLog<NexmarkEvent>),
    Ysb {
        events: EventLog<YsbEvent>,
        campaigns: RecordBatch,
    },
}

impl Source {
    pub fn generate(query: QueryId, events: u64, events_per_sec: u64, seed: u64) -> Result<Self, WorkloadError> {
        if events_per_sec == 0 {
            return Err(WorkloadError::Config("events per second must be positive".into()));
        }
        if query.is_nexmark() {
            return Ok(Source::Nexmark(nexmark::gen_nexmark(events, events_per_sec, seed)));
        }
        let mut all = ysb::gen_ysb(events_per_sec, events.div_ceil(events_per_sec), seed)
            .events()
            .to_vec();
        all.truncate(events as usize);
        Ok(Source::Ysb {
            events: EventLog::new(all),
            campaigns: ysb::campaign_table()?,
        })
    }

    pub fn len(&self) -> u64 {
        match self {
            Source::Nexmark(l) => l.len(),
            Source::Ysb { events, .. } => events.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_ts(&self) -> Option<i64> {
        match self {
            Source::Nexmark(l) => l.events().last().map(NexmarkEvent::date_time),
            Source::Ysb { events, .. } => events.events().last().map(|e| e.event_time),
        }
    }

    /// Offsets of the events with time in `[start_ms, end_ms)`; for YSB also
    /// the whole campaign table.
    pub fn offsets(&self, start_ms: i64, end_ms: i64) -> Vec<(u64, u64)> {
        match self {
            Source::Nexmark(l) => vec![l.range_where(|e| e.date_time() < start_ms, |e| e.date_time() < end_ms)],
            Source::Ysb { events, campaigns } => vec![
                events.range_where(|e| e.event_time < start_ms, |e| e.event_time < end_ms),
                (0, campaigns.num_rows() as u64),
            ],
        }
    }

    /// Input tables of `query` for the given offsets.
    pub fn tables(&self, query: QueryId, offsets: &[(u64, u64)]) -> Result<Vec<RecordBatch>, WorkloadError> {
        let (start, end) = offsets[0];
        match self {
            Source::Nexmark(l) => {
                let [persons, auctions, bids] = nexmark::to_batches(l.read(start, end)?)?;
                Ok(match query {
                    QueryId::Q3 => vec![persons, auctions],
                    QueryId::Q4 => vec![auctions, bids],
                    _ => vec![bids],
                })
            }
            Source::Ysb { events, campaigns } => Ok(vec![ysb::to_batch(events.read(start, end)?)?, campaigns.clone()]),
        }
    }

    /// Reference answer over the given offsets.
    pub fn reference(&self, query: QueryId, offsets: &[(u64, u64)]) -> Result<Rows, WorkloadError> {
        let (start, end) = offsets[0];
        Ok(match self {
            Source::Nexmark(l) => oracle::nexmark_epoch(query, l.read(start, end)?),
            Source::Ysb { events, .. } => oracle::ysb_epoch(events.read(start, end)?),
        })
    }
}

/// A query installed on the platform.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub query_code: String,
    pub plan: PhysicalPlan,
    pub dag: StageDag,
    /// Function receiving source payloads.
    pub entry: String,
    pub output_schema: Schema,
}

/// Plan the query for `cfg.mode` and create one function per group member.
pub fn deploy(platform: &mut Platform, cfg: &BenchConfig) -> Result<Deployment, WorkloadError> {
    let plan = cfg.query.plan()?;
    let qc = query_code(&plan);
    let (dag, g) = match cfg.mode {
        ExecMode::Centralized => (single_stage(&plan)?, 1),
        ExecMode::Distributed => (partition_plan(&plan)?, cfg.group_size),
    };
    let dag = assign_groups(&dag, g, &qc)?;
    let handler = Rc::new(StageFunction::new(cfg.cost.clone()));
    for stage in &dag.stages {
        let ctx = CloudContext::new(&qc, stage.clone(), cfg.query.window(), cfg.invoke);
        let env = encode_context(&ctx, ENV_LIMIT, platform)?;
        let group = FunctionGroup {
            query_code: qc.clone(),
            stage_id: stage.stage_id,
            size: stage.group_size,
        };
        for name in group.members() {
            let def = FunctionDef::new(name.to_string(), env.clone())
                .memory(cfg.memory_mb)
                .concurrency(stage.concurrency)
                .arch(cfg.arch);
            platform.create_function(def, handler.clone())?;
        }
    }
    let entry = FunctionGroup {
        query_code: qc.clone(),
        stage_id: dag.stages[0].stage_id,
        size: 1,
    }
    .member(0)
    .to_string();
    let output_schema = plan.schema()?;
    Ok(Deployment {
        query_code: qc,
        plan,
        dag,
        entry,
        output_schema,
    })
}

/// Driver bookkeeping carried in checkpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverStats {
    pub epochs: u64,
    pub events: u64,
}

struct BenchRunner<'a> {
    platform: Platform,
    cfg: &'a BenchConfig,
    source: &'a Source,
    dep: Deployment,
    /// Launch number, used as the query timestamp.
    launch: u32,
    latencies_us: Vec<u64>,
}

impl BenchRunner<'_> {
    /// Each epoch is its own job.
    fn qid(&self, epoch: u64) -> Result<Qid, WorkloadError> {
        Ok(Qid::new(self.dep.query_code.clone(), format!("e{epoch}"), i64::from(self.launch))?)
    }

    fn offsets_of(&self, epoch: u64) -> Vec<(u64, u64)> {
        let (start, end) = self.cfg.query.epoch_range(epoch);
        self.source.offsets(start, end)
    }

    /// Source rows cut into chunks that each become one payload.
    fn pieces(&self, tables: Vec<RecordBatch>, epoch: u64) -> Result<Vec<RecordBatch>, WorkloadError> {
        let probe = PayloadMeta::new(Uuid::new(self.qid(epoch)?, 1, 1)?, epoch, 1);
        let mut pieces = Vec::new();
        for t in &tables {
            let n = t.num_rows();
            let step = match self.cfg.mode {
                ExecMode::Distributed if self.cfg.source_rows > 0 => self.cfg.source_rows,
                _ => n.max(1),
            };
            for off in (0..n).step_by(step) {
                let chunk = t.slice(off, step.min(n - off));
                pieces.extend(split_rows(t.schema(), &[chunk], &probe, self.cfg.invoke, Codec::default())?);
            }
        }
        if pieces.is_empty() {
            pieces.push(RecordBatch::new_empty(tables[0].schema().clone()));
        }
        Ok(pieces)
    }

    fn send_sync(&mut self, t0: u64, payloads: &[Vec<u8>], epoch: u64) -> Result<(u64, Option<String>), WorkloadError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ epoch.rotate_left(32));
        let (mut end, mut failure) = (t0, None);
        for bytes in payloads {
            let mut policy = RetryPolicy::new(1000);
            let mut t = t0;
            loop {
                match self.platform.invoke_sync_at(t, &self.dep.entry, bytes) {
                    Ok(out) => {
                        end = end.max(out.end_us);
                        if let Err(msg) = out.response {
                            failure.get_or_insert(msg);
                        }
                        break;
                    }
                    Err(SimError::Throttled(_)) => t += policy.next_wait(&mut rng) * 1000,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok((end, failure))
    }

    fn send_async(&mut self, t0: u64, payloads: &[Vec<u8>]) -> Result<(u64, Option<String>), WorkloadError> {
        let dead_before = self.platform.dlq().len();
        for bytes in payloads {
            self.platform.invoke_async_at(t0, &self.dep.entry, bytes)?;
        }
        self.platform.run_until_quiescent()?;
        let failure = self.platform.dlq()[dead_before..].first().map(|d| d.error.clone());
        Ok((self.platform.last_end_us().max(t0), failure))
    }
}

impl EpochRunner for BenchRunner<'_> {
    type State = DriverStats;
    type Error = WorkloadError;

    fn store(&mut self) -> &mut dyn ObjectStorage {
        &mut self.platform
    }

    fn offsets(&self, epoch: u64) -> Vec<(u64, u64)> {
        self.offsets_of(epoch)
    }

    fn run_epoch(&mut self, state: &mut DriverStats, epoch: u64) -> Result<(), WorkloadError> {
        let offsets = self.offsets_of(epoch);
        let (_, end_ms) = self.cfg.query.epoch_range(epoch);
        let trigger_us = end_ms.max(0) as u64 * 1000;
        let t0 = trigger_us.max(self.platform.now_us()).max(self.platform.last_end_us());
        self.platform.advance_to(t0);

        let tables = self.source.tables(self.cfg.query, &offsets)?;
        let pieces = self.pieces(tables, epoch)?;
        let n = pieces.len() as u32;
        let qid = self.qid(epoch)?;
        let mut payloads = Vec::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            let meta = PayloadMeta::new(Uuid::new(qid.clone(), i as u32 + 1, n)?, epoch, 1);
            payloads.push(encode_payload(p.schema(), std::slice::from_ref(p), &meta, Codec::default())?);
        }
        let (end, failure) = match self.cfg.invoke {
            InvocationMode::Sync => self.send_sync(t0, &payloads, epoch)?,
            InvocationMode::Async => self.send_async(t0, &payloads)?,
        };
        self.platform.advance_to(end);
        if !is_committed(&mut self.platform, &self.dep.query_code, epoch)? {
            return Err(WorkloadError::EpochFailed {
                epoch,
                reason: failure.unwrap_or_else(|| "no commit record".into()),
            });
        }
        self.latencies_us.push(end - t0);
        state.epochs += 1;
        state.events += offsets[0].1 - offsets[0].0;
        Ok(())
    }

    fn replay_epoch(&mut self, state: &mut DriverStats, epoch: u64) -> Result<(), WorkloadError> {
        let offsets = self.offsets_of(epoch);
        let (start, end) = offsets[0];
        let replayed = match self.source {
            Source::Nexmark(l) => l.read(start, end)?.len(),
            Source::Ysb { events, .. } => events.read(start, end)?.len(),
        };
        state.epochs += 1;
        state.events += replayed as u64;
        Ok(())
    }

    fn ensure_emitted(&mut self, epoch: u64) -> Result<(), WorkloadError> {
        let label = window_label(self.cfg.query.window().as_ref(), epoch);
        let qc = self.dep.query_code.clone();
        match self.platform.get(&result_key(&qc, &label)) {
            Ok(_) => Ok(()),
            Err(SimError::NoSuchKey(_)) => {
                let schema = Arc::new(self.dep.output_schema.clone());
                emit(&mut self.platform, &qc, &label, &schema, Codec::default())?;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Result windows by label.
pub type SinkResults = BTreeMap<String, Rows>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub query: QueryId,
    pub mode: ExecMode,
    pub invoke: InvocationMode,
    pub memory_mb: u32,
    pub arch: Arch,
    pub seed: u64,
    pub events_processed: u64,
    pub epochs: u64,
    /// Mean time from an epoch's trigger to its last handler finishing.
    pub latency_ms: f64,
    pub max_latency_ms: f64,
    pub billed_duration_ms: u64,
    pub invocations: u64,
    pub functions: usize,
    pub cold_starts: usize,
    pub dollars: Dollars,
    pub launches: u32,
    pub error: Option<String>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(&format!("{k:<20}{v}\n"));
        };
        line("query", self.query.to_string());
        line("mode", self.mode.to_string());
        line("invoke", self.invoke.to_string());
        line("memory_mb", self.memory_mb.to_string());
        line("arch", self.arch.to_string());
        line("seed", self.seed.to_string());
        line("events_processed", self.events_processed.to_string());
        line("epochs", self.epochs.to_string());
        line("latency_ms", format!("{:.3}", self.latency_ms));
        line("max_latency_ms", format!("{:.3}", self.max_latency_ms));
        line("billed_duration_ms", self.billed_duration_ms.to_string());
        line("invocations", self.invocations.to_string());
        line("functions", self.functions.to_string());
        line("cold_starts", self.cold_starts.to_string());
        line("dollars", self.dollars.to_string());
        line("launches", self.launches.to_string());
        line("error", self.error.clone().unwrap_or_else(|| "none".into()));
        s
    }
}

/// Everything a benchmark run produced.
pub struct BenchRun {
    pub report: BenchReport,
    pub results: SinkResults,
    pub reference: SinkResults,
    pub deployment: Deployment,
    pub recoveries: Vec<Recovery>,
    /// The platform of the last launch, with its trace and store.
    pub platform: Platform,
}

impl BenchRun {
    pub fn verify(&self) -> Result<(), String> {
        compare_results(self.report.query, &self.results, &self.reference)
    }
}

/// Compare sink output with the reference, window by window. Row order only
/// matters for queries whose output is sorted.
pub fn compare_results(query: QueryId, got: &SinkResults, want: &SinkResults) -> Result<(), String> {
    let norm = |rows: &Rows| if query.ordered() { rows.clone() } else { canonical(rows.clone()) };
    let labels: std::collections::BTreeSet<&String> = got.keys().chain(want.keys()).collect();
    for label in labels {
        let g = got.get(label).map(norm).unwrap_or_default();
        let w = want.get(label).map(norm).unwrap_or_default();
        if g != w {
            return Err(format!(
                "window {label}: {} rows from the sink, {} expected; first difference at row {}",
                g.len(),
                w.len(),
                g.iter().zip(&w).position(|(a, b)| a != b).unwrap_or(g.len().min(w.len()))
            ));
        }
    }
    Ok(())
}

fn read_results(store: &ObjectStore, query_code: &str) -> Result<SinkResults, WorkloadError> {
    let prefix = result_prefix(query_code);
    let mut out = SinkResults::new();
    for key in store.keys().filter(|k| k.starts_with(&prefix)) {
        let (batches, _) = decode_payload(store.peek(key).expect("listed key"))?;
        let rows: Rows = batches.iter().flat_map(RecordBatch::rows).collect();
        if !rows.is_empty() {
            out.insert(key[prefix.len()..].to_string(), rows);
        }
    }
    Ok(out)
}

type Launch = Result<(DriverStats, Recovery, Vec<u64>, Deployment), WorkloadError>;

fn launch(mut platform: Platform, cfg: &BenchConfig, source: &Source, epochs: u64, attempt: u32) -> (Platform, Launch) {
    let dep = match deploy(&mut platform, cfg) {
        Ok(d) => d,
        Err(e) => return (platform, Err(e)),
    };
    let mut runner = BenchRunner {
        platform,
        cfg,
        source,
        dep: dep.clone(),
        launch: attempt,
        latencies_us: Vec::new(),
    };
    let out = drive(&mut runner, &dep.query_code, epochs, cfg.checkpoint_every.max(1));
    let BenchRunner {
        platform,
        latencies_us,
        ..
    } = runner;
    (platform, out.map(|(s, r)| (s, r, latencies_us, dep)))
}

/// Run a benchmark end to end. A crash of the simulated process triggers a
/// relaunch over the surviving object store, which recovers from the log.
/// A failed epoch (for example out of memory) ends the run early; the
/// report then carries the error.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchRun, WorkloadError> {
    let source = Source::generate(cfg.query, cfg.events, cfg.events_per_sec, cfg.seed)?;
    let epochs = cfg.query.epochs_for(source.max_ts());
    let mut store = ObjectStore::new();
    let mut recoveries = Vec::new();
    let mut attempt = 0;
    let (platform, stats, error, latencies, dep) = loop {
        let mut sim = cfg.sim.clone();
        if attempt > 0 {
            sim.crash_at = None;
        }
        let platform = Platform::with_store(sim, store);
        let (platform, out) = launch(platform, cfg, &source, epochs, attempt);
        match out {
            Ok((stats, recovery, lat, dep)) => {
                recoveries.push(recovery);
                break (platform, stats, None, lat, Some(dep));
            }
            Err(e) if e.is_crash() => {
                attempt += 1;
                if attempt >= MAX_LAUNCHES {
                    return Err(e);
                }
                store = platform.into_store();
            }
            Err(WorkloadError::EpochFailed { epoch, reason }) => {
                let msg = format!("epoch {epoch} failed: {reason}");
                break (platform, DriverStats::default(), Some(msg), Vec::new(), None);
            }
            Err(e) => return Err(e),
        }
    };
    let dep = match dep {
        Some(d) => d,
        None => {
            let mut scratch = Platform::new(SimConfig::instantaneous());
            deploy(&mut scratch, cfg)?
        }
    };

    let mut reference = SinkResults::new();
    for e in 0..epochs {
        let (start, end) = cfg.query.epoch_range(e);
        let rows = source.reference(cfg.query, &source.offsets(start, end))?;
        if !rows.is_empty() {
            reference.insert(window_label(cfg.query.window().as_ref(), e), rows);
        }
    }
    let results = read_results(platform.store(), &dep.query_code)?;
    let bill = platform.billing_report();
    let mean = |v: &[u64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<u64>() as f64 / v.len() as f64 / 1000.0
        }
    };
    let report = BenchReport {
        query: cfg.query,
        mode: cfg.mode,
        invoke: cfg.invoke,
        memory_mb: cfg.memory_mb,
        arch: cfg.arch,
        seed: cfg.seed,
        events_processed: stats.events,
        epochs: stats.epochs,
        latency_ms: mean(&latencies),
        max_latency_ms: latencies.iter().copied().max().unwrap_or(0) as f64 / 1000.0,
        billed_duration_ms: bill.total_billed_ms(),
        invocations: bill.total_invocations(),
        functions: platform.function_names().count(),
        cold_starts: platform.trace().of_kind(TraceKind::ColdStart).count(),
        dollars: bill.total_dollars(),
        launches: attempt + 1,
        error,
    };
    Ok(BenchRun {
        report,
        results,
        reference,
        deployment: dep,
        recoveries,
        platform,
    })
}
