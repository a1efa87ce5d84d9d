use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arena::{Arena, Collected};
use super::cost::CostModel;
use super::retry::RetryPolicy;
use super::ring::HashRing;
use super::sink::{window_label, write_part, SinkOutcome};
use super::RuntimeError;
use crate::payload::{split_fragments, InvocationMode, Payload, PayloadMeta, Uuid};
use crate::planner::{decode_context, CloudContext};
use crate::query::hash::hash_str;
use crate::query::RecordBatch;
use crate::sim::{Handler, HandlerError, Invocation, SimError};

/// Per-instance state, built on the first request an instance serves.
#[derive(Debug)]
pub struct WorkerState {
    pub ctx: CloudContext,
    pub arena: Arena,
    /// Ring over the next group; `None` at the sink.
    pub ring: Option<HashRing>,
    pub latest_epoch: u64,
}

/// Result of offering a payload to a stage.
#[derive(Debug, Clone, PartialEq)]
pub enum HandlerStatus {
    Ready(Vec<RecordBatch>),
    NotReady,
    Processed,
}

impl HandlerStatus {
    fn response(&self) -> &'static str {
        match self {
            HandlerStatus::Ready(_) => "ok",
            HandlerStatus::NotReady => "data is not yet ready",
            HandlerStatus::Processed => "data has been processed",
        }
    }
}

fn response(msg: &str) -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({ "response": msg })).expect("json")
}

/// Decode this function's context from its environment, fetching it from
/// the object store when it was too large to inline.
pub fn init_context(inv: &mut Invocation<'_>) -> Result<(WorkerState, usize), RuntimeError> {
    let env = inv.env().clone();
    let size = env.env_size();
    let ctx = decode_context(&env, inv).map_err(|e| RuntimeError::Uninitialized(e.to_string()))?;
    let ring = ctx
        .stage
        .next
        .as_ref()
        .map(|g| HashRing::for_group(&ctx.query_code, g.members().iter().map(ToString::to_string).collect()));
    Ok((
        WorkerState {
            ctx,
            arena: Arena::new(),
            ring,
            latest_epoch: 0,
        },
        size,
    ))
}

/// Decode a payload right away in a stateless stage, or collect it until
/// every upstream payload for its shuffle id is in.
pub fn prepare_data(state: &mut WorkerState, payload: Payload) -> Result<HandlerStatus, RuntimeError> {
    if !state.ctx.stage.stateful {
        return Ok(HandlerStatus::Ready(payload.decode_batches()?));
    }
    let shuffle = payload.meta.shuffle_id as usize;
    if shuffle > state.ctx.stage.input_partitions {
        return Err(RuntimeError::Protocol(format!(
            "shuffle_id {shuffle} beyond {} input partitions",
            state.ctx.stage.input_partitions
        )));
    }
    Ok(match state.arena.collect(payload)? {
        Collected::NotReady => HandlerStatus::NotReady,
        Collected::Processed => HandlerStatus::Processed,
        Collected::Ready(b) => HandlerStatus::Ready(b),
    })
}

/// Run every output root of the stage; one list of partitions per port.
pub fn execute_stage(
    ctx: &CloudContext,
    batches: &[RecordBatch],
) -> Result<Vec<Vec<RecordBatch>>, RuntimeError> {
    let sources = ctx.stage.sources();
    for b in batches {
        if !sources.iter().any(|(_, s)| s.fields() == b.schema().fields()) {
            return Err(RuntimeError::Protocol(format!(
                "stage {:02} has no input with schema {:?}",
                ctx.stage.stage_id,
                b.schema().fields().iter().map(|f| f.name.as_str()).collect::<Vec<_>>()
            )));
        }
    }
    ctx.stage
        .outputs
        .iter()
        .map(|o| o.execute_partitioned(batches).map_err(RuntimeError::from))
        .collect()
}

/// `(producer index, producer count)` of the request that carried `meta`.
/// A stateless request is one of `seq_len` pieces; a stateful one produced
/// the output for shuffle id `shuffle_id` of `input_partitions`.
pub fn output_sequence(ctx: &CloudContext, meta: &PayloadMeta) -> (u32, u32) {
    if ctx.stage.stateful {
        (meta.shuffle_id, ctx.stage.input_partitions as u32)
    } else {
        (meta.uuid.seq_num, meta.uuid.seq_len)
    }
}

/// Handler shared by every member of every stage group.
#[derive(Debug, Clone, Default)]
pub struct StageFunction {
    pub cost: CostModel,
}

impl StageFunction {
    pub fn new(cost: CostModel) -> Self {
        StageFunction { cost }
    }

    fn run(
        &self,
        inv: &mut Invocation<'_>,
        state: &mut WorkerState,
        bytes: &[u8],
    ) -> Result<Vec<u8>, RuntimeError> {
        self.cost.charge_bytes(inv, bytes.len());
        let payload = Payload::parse(bytes)?;
        let meta = payload.meta.clone();
        state.latest_epoch = state.latest_epoch.max(meta.epoch_id);
        state
            .arena
            .evict_before(state.latest_epoch.saturating_sub(state.ctx.tombstone_epochs));

        let batches = match prepare_data(state, payload)? {
            HandlerStatus::Ready(b) => b,
            other => return Ok(response(other.response())),
        };
        let decoded: usize = batches.iter().map(RecordBatch::byte_size).sum();
        let budget = (f64::from(inv.memory_mb()) * 1024.0 * 1024.0 * 0.9) as usize;
        if decoded * 2 > budget {
            return Err(RuntimeError::OutOfMemory {
                needed: decoded * 2,
                budget,
            });
        }
        self.cost.charge_bytes(inv, decoded);
        let rows: usize = batches.iter().map(RecordBatch::num_rows).sum();
        let ops = state.ctx.stage.outputs.iter().map(|o| o.operators().len()).sum();
        self.cost.charge_rows(inv, rows, ops);

        let outputs = execute_stage(&state.ctx, &batches)?;
        let (j, n) = output_sequence(&state.ctx, &meta);
        let ctx = &state.ctx;
        if ctx.stage.is_sink() {
            let label = window_label(ctx.window.as_ref(), meta.epoch_id);
            let batch = &outputs[0][0];
            self.cost.charge_bytes(inv, batch.byte_size());
            let outcome = write_part(inv, &meta.uuid.qid, meta.epoch_id, &label, j, n, batch, ctx.encoding)?;
            if let SinkOutcome::Committed = outcome {
                inv.record(format!("commit epoch={} window={label}", meta.epoch_id))?;
            }
            return Ok(response("ok"));
        }

        let ring = state.ring.as_ref().ok_or_else(|| {
            RuntimeError::Protocol(format!("stage {:02} has no next group", ctx.stage.stage_id))
        })?;
        let next = ctx.stage.next.as_ref().expect("ring implies next group");
        let ports = outputs.len() as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(hash_str(
            inv.instance_id() ^ inv.now_us(),
            inv.function_name(),
        ));
        for (p, parts) in outputs.iter().enumerate() {
            for (s, batch) in parts.iter().enumerate() {
                let shuffle = s as u32 + 1;
                let seq = (j - 1) * ports + p as u32 + 1;
                let meta_out = PayloadMeta::new(
                    Uuid::new(meta.uuid.qid.clone(), seq, n * ports)?,
                    meta.epoch_id,
                    shuffle,
                );
                let pieces = split_fragments(
                    batch.schema(),
                    std::slice::from_ref(batch),
                    &meta_out,
                    ctx.invoke,
                    ctx.encoding,
                )?;
                self.cost.charge_bytes(inv, batch.byte_size());
                let dest = ring.destination(&next.query_code, next.stage_id, shuffle).to_string();
                for piece in pieces {
                    send(inv, ctx, &dest, &piece, &mut rng)?;
                }
            }
        }
        Ok(response("ok"))
    }
}

fn send(
    inv: &mut Invocation<'_>,
    ctx: &CloudContext,
    dest: &str,
    bytes: &[u8],
    rng: &mut ChaCha8Rng,
) -> Result<(), RuntimeError> {
    if ctx.invoke == InvocationMode::Async {
        inv.invoke_async(dest, bytes)?;
        return Ok(());
    }
    let mut policy = RetryPolicy::new(ctx.max_backoff_ms);
    let mut attempts = 0;
    loop {
        match inv.invoke_sync(dest, bytes) {
            Ok(_) => return Ok(()),
            Err(SimError::Throttled(_)) => {
                attempts += 1;
                if attempts > ctx.max_retries {
                    return Err(RuntimeError::RetriesExhausted {
                        target: dest.to_string(),
                        attempts,
                    });
                }
                let wait = policy.next_wait(rng);
                inv.record(format!("backoff target={dest} wait_ms={wait}"))?;
                inv.sleep_ms(wait);
            }
            Err(e) => return Err(e.into()),
        }
    }
}

impl Handler for StageFunction {
    fn handle(&self, inv: &mut Invocation<'_>, payload: &[u8]) -> Result<Vec<u8>, HandlerError> {
        self.cost.charge_request(inv);
        if inv.static_context().is_none() {
            let (state, size) = init_context(inv)?;
            inv.record(format!("init stage={:02}", state.ctx.stage.stage_id))?;
            self.cost.charge_init(inv, size);
            *inv.static_context() = Some(Box::new(state));
        }
        let mut slot = inv.static_context().take().expect("initialised above");
        let result = match slot.downcast_mut::<WorkerState>() {
            Some(state) => self.run(inv, state, payload),
            None => Err(RuntimeError::Uninitialized("foreign instance state".into())),
        };
        *inv.static_context() = Some(slot);
        result.map_err(HandlerError::from)
    }
}
