use std::any::Any;
use std::collections::BTreeMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::billing::{billed_ms, Arch, BillingModel, BillingReport, FunctionBill, StoreBill};
use super::latency::LatencyModel;
use super::store::{ObjectStorage, ObjectStore};
use super::trace::{Trace, TraceKind};
use super::SimError;
use crate::payload::InvocationMode;
use crate::planner::{EnvEncoding, ENV_LIMIT};

pub const MIN_MEMORY_MB: u32 = 128;
pub const MAX_MEMORY_MB: u32 = 10_240;
pub const DEFAULT_CONCURRENCY: u32 = 1000;

/// Busy marker for an instance whose handler is on the stack.
const IN_FLIGHT: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub env: EnvEncoding,
    pub memory_mb: u32,
    pub concurrency_limit: u32,
    pub arch: Arch,
}

impl FunctionDef {
    pub fn new(name: impl Into<String>, env: EnvEncoding) -> Self {
        FunctionDef {
            name: name.into(),
            env,
            memory_mb: 512,
            concurrency_limit: DEFAULT_CONCURRENCY,
            arch: Arch::Arm,
        }
    }

    pub fn memory(mut self, mb: u32) -> Self {
        self.memory_mb = mb;
        self
    }

    pub fn concurrency(mut self, limit: u32) -> Self {
        self.concurrency_limit = limit;
        self
    }

    pub fn arch(mut self, arch: Arch) -> Self {
        self.arch = arch;
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HandlerError {
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Function code. One handler value serves every instance of a function;
/// per-instance state lives in [`Invocation::static_context`].
pub trait Handler {
    fn handle(&self, inv: &mut Invocation<'_>, payload: &[u8]) -> Result<Vec<u8>, HandlerError>;
}

impl<F> Handler for F
where
    F: Fn(&mut Invocation<'_>, &[u8]) -> Result<Vec<u8>, HandlerError>,
{
    fn handle(&self, inv: &mut Invocation<'_>, payload: &[u8]) -> Result<Vec<u8>, HandlerError> {
        self(inv, payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureKind {
    /// The handler fails before doing any work.
    Error,
}

/// Fail the `invocation_index`-th (from 0) handler start of `function`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureInjection {
    pub function: String,
    pub invocation_index: u64,
    pub kind: FailureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Chance that an accepted async event is delivered a second time.
    pub duplicate_delivery_prob: f64,
    /// Queueing delay before async delivery, uniform in `[min, max]` ms.
    pub async_queue_delay_ms: (u64, u64),
    pub cold_start_ms: u64,
    pub failure_injections: Vec<FailureInjection>,
    pub latency_model: LatencyModel,
    pub rng_seed: u64,
    pub idle_timeout_ms: u64,
    /// Async deliveries per event before it is dead-lettered.
    pub max_attempts: u32,
    pub retry_delay_ms: u64,
    /// Time an object-store request takes inside a handler.
    pub store_latency_ms: u64,
    /// Kill the platform when the trace reaches this index.
    pub crash_at: Option<u64>,
    pub billing: BillingModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duplicate_delivery_prob: 0.0,
            async_queue_delay_ms: (5, 25),
            cold_start_ms: 250,
            failure_injections: Vec::new(),
            latency_model: LatencyModel::default(),
            rng_seed: 0,
            idle_timeout_ms: 10 * 60 * 1000,
            max_attempts: 3,
            retry_delay_ms: 1000,
            store_latency_ms: 15,
            crash_at: None,
            billing: BillingModel::default(),
        }
    }
}

impl SimConfig {
    /// No transfer, queueing, cold-start or store time: handler compute only.
    pub fn instantaneous() -> Self {
        SimConfig {
            async_queue_delay_ms: (0, 0),
            cold_start_ms: 0,
            latency_model: LatencyModel::zero(),
            store_latency_ms: 0,
            retry_delay_ms: 0,
            ..SimConfig::default()
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

struct Instance {
    id: u64,
    busy_until: u64,
    slot: Option<Box<dyn Any>>,
}

struct FunctionState {
    def: FunctionDef,
    handler: Rc<dyn Handler>,
    instances: Vec<Instance>,
    starts: u64,
    peak_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadLetter {
    pub event_id: u64,
    pub function: String,
    pub payload: Vec<u8>,
    pub attempts: u32,
    pub error: String,
}

struct AsyncEvent {
    id: u64,
    function: String,
    payload: Rc<Vec<u8>>,
    attempt: u32,
}

/// Result of one handler run.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncOutcome {
    pub response: Result<Vec<u8>, String>,
    pub billed_ms: u64,
    pub end_us: u64,
}

/// Deterministic discrete-event FaaS platform.
pub struct Platform {
    config: SimConfig,
    rng: ChaCha8Rng,
    now_us: u64,
    last_end_us: u64,
    functions: BTreeMap<String, FunctionState>,
    store: ObjectStore,
    queue: BTreeMap<(u64, u64), AsyncEvent>,
    next_order: u64,
    next_event: u64,
    next_instance: u64,
    dlq: Vec<DeadLetter>,
    trace: Trace,
    bills: BTreeMap<String, FunctionBill>,
}

impl Platform {
    pub fn new(config: SimConfig) -> Self {
        Self::with_store(config, ObjectStore::new())
    }

    /// Start over an existing object store, as after a restart.
    pub fn with_store(config: SimConfig, store: ObjectStore) -> Self {
        Platform {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            trace: Trace::new(config.crash_at),
            config,
            now_us: 0,
            last_end_us: 0,
            functions: BTreeMap::new(),
            store,
            queue: BTreeMap::new(),
            next_order: 0,
            next_event: 0,
            next_instance: 0,
            dlq: Vec::new(),
            bills: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// The durable part of the platform.
    pub fn into_store(self) -> ObjectStore {
        self.store
    }

    pub fn store(&self) -> &ObjectStore {
        &self.store
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn dlq(&self) -> &[DeadLetter] {
        &self.dlq
    }

    pub fn crashed(&self) -> bool {
        self.trace.crashed()
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn advance_to(&mut self, t_us: u64) {
        self.now_us = self.now_us.max(t_us);
    }

    /// End time of the latest handler run so far.
    pub fn last_end_us(&self) -> u64 {
        self.last_end_us
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.get(name).map(|f| &f.def)
    }

    pub fn function_names(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    pub fn instance_count(&self, name: &str) -> usize {
        self.functions.get(name).map_or(0, |f| f.instances.len())
    }

    pub fn peak_instances(&self, name: &str) -> usize {
        self.functions.get(name).map_or(0, |f| f.peak_instances)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    fn alive(&self) -> Result<(), SimError> {
        if self.trace.crashed() {
            Err(SimError::Crashed)
        } else {
            Ok(())
        }
    }

    pub fn create_function(&mut self, def: FunctionDef, handler: Rc<dyn Handler>) -> Result<(), SimError> {
        self.alive()?;
        if self.functions.contains_key(&def.name) {
            return Err(SimError::AlreadyExists(def.name));
        }
        if !(MIN_MEMORY_MB..=MAX_MEMORY_MB).contains(&def.memory_mb) {
            return Err(SimError::InvalidMemory(def.memory_mb));
        }
        if def.concurrency_limit == 0 {
            return Err(SimError::InvalidConcurrency(def.name));
        }
        if let EnvEncoding::Inline { bytes, .. } = &def.env {
            if bytes.len() > ENV_LIMIT {
                return Err(SimError::EnvTooLarge {
                    size: bytes.len(),
                    limit: ENV_LIMIT,
                });
            }
        }
        self.trace.record(
            self.now_us,
            TraceKind::CreateFunction,
            &def.name,
            None,
            format!("memory_mb={} arch={} env_bytes={}", def.memory_mb, def.arch, def.env.env_size()),
        )?;
        self.functions.insert(
            def.name.clone(),
            FunctionState {
                def,
                handler,
                instances: Vec::new(),
                starts: 0,
                peak_instances: 0,
            },
        );
        Ok(())
    }

    pub fn put_function_concurrency(&mut self, name: &str, limit: u32) -> Result<(), SimError> {
        self.alive()?;
        if limit == 0 {
            return Err(SimError::InvalidConcurrency(name.to_string()));
        }
        if !self.functions.contains_key(name) {
            return Err(SimError::NotFound(name.to_string()));
        }
        self.trace
            .record(self.now_us, TraceKind::SetConcurrency, name, None, format!("limit={limit}"))?;
        self.functions.get_mut(name).expect("checked").def.concurrency_limit = limit;
        Ok(())
    }

    /// Synchronous call from a client at the platform clock; the clock moves
    /// to the response time.
    pub fn invoke_sync(&mut self, name: &str, payload: &[u8]) -> Result<Vec<u8>, SimError> {
        let out = self.invoke_sync_at(self.now_us, name, payload)?;
        self.now_us = self.now_us.max(out.end_us);
        out.response.map_err(SimError::Handler)
    }

    /// Synchronous call issued by a client at `t_us`.
    pub fn invoke_sync_at(&mut self, t_us: u64, name: &str, payload: &[u8]) -> Result<SyncOutcome, SimError> {
        self.alive()?;
        check_cap(payload, InvocationMode::Sync)?;
        let at = t_us + self.config.latency_model.transfer_us(InvocationMode::Sync, payload.len());
        self.run(name, payload, at, InvocationMode::Sync, "client")
    }

    pub fn invoke_async(&mut self, name: &str, payload: &[u8]) -> Result<(), SimError> {
        self.enqueue(self.now_us, name, payload, "client")
    }

    pub fn invoke_async_at(&mut self, t_us: u64, name: &str, payload: &[u8]) -> Result<(), SimError> {
        self.enqueue(t_us, name, payload, "client")
    }

    fn enqueue(&mut self, t_us: u64, name: &str, payload: &[u8], caller: &str) -> Result<(), SimError> {
        self.alive()?;
        check_cap(payload, InvocationMode::Async)?;
        if !self.functions.contains_key(name) {
            return Err(SimError::NotFound(name.to_string()));
        }
        let id = self.next_event;
        self.next_event += 1;
        self.trace.record(
            t_us,
            TraceKind::Enqueue,
            name,
            None,
            format!("event={id} bytes={} from={caller}", payload.len()),
        )?;
        let payload = Rc::new(payload.to_vec());
        let at = t_us + self.delivery_delay_us(payload.len());
        self.push_event(at, id, name, payload.clone(), 1);
        let p = self.config.duplicate_delivery_prob;
        if p > 0.0 && self.rng.gen::<f64>() < p {
            let at = t_us + self.delivery_delay_us(payload.len());
            self.trace
                .record(t_us, TraceKind::Duplicate, name, None, format!("event={id}"))?;
            self.push_event(at, id, name, payload, 1);
        }
        Ok(())
    }

    fn delivery_delay_us(&mut self, bytes: usize) -> u64 {
        let (lo, hi) = self.config.async_queue_delay_ms;
        let q = if hi > lo { self.rng.gen_range(lo * 1000..=hi * 1000) } else { lo * 1000 };
        q + self.config.latency_model.transfer_us(InvocationMode::Async, bytes)
    }

    fn push_event(&mut self, at: u64, id: u64, name: &str, payload: Rc<Vec<u8>>, attempt: u32) {
        let order = self.next_order;
        self.next_order += 1;
        self.queue.insert(
            (at, order),
            AsyncEvent {
                id,
                function: name.to_string(),
                payload,
                attempt,
            },
        );
    }

    /// Deliver queued async events in time order until none remain.
    pub fn run_until_quiescent(&mut self) -> Result<(), SimError> {
        self.alive()?;
        while let Some(((at, _), ev)) = self.queue.pop_first() {
            self.now_us = self.now_us.max(at);
            match self.run(&ev.function, &ev.payload, at, InvocationMode::Async, "queue") {
                Ok(out) => {
                    if let Err(msg) = out.response {
                        if ev.attempt < self.config.max_attempts {
                            self.trace.record(
                                out.end_us,
                                TraceKind::Retry,
                                &ev.function,
                                None,
                                format!("event={} attempt={}", ev.id, ev.attempt + 1),
                            )?;
                            let at = out.end_us + self.config.retry_delay_ms * 1000;
                            self.push_event(at, ev.id, &ev.function, ev.payload, ev.attempt + 1);
                        } else {
                            self.trace.record(
                                out.end_us,
                                TraceKind::DeadLetter,
                                &ev.function,
                                None,
                                format!("event={} attempts={}", ev.id, ev.attempt),
                            )?;
                            self.dlq.push(DeadLetter {
                                event_id: ev.id,
                                function: ev.function,
                                payload: ev.payload.to_vec(),
                                attempts: ev.attempt,
                                error: msg,
                            });
                        }
                    }
                }
                Err(SimError::Throttled(_)) => {
                    let retry_at = self.next_free_us(&ev.function, at);
                    self.push_event(retry_at, ev.id, &ev.function, ev.payload, ev.attempt);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn next_free_us(&self, name: &str, after: u64) -> u64 {
        self.functions
            .get(name)
            .and_then(|f| f.instances.iter().map(|i| i.busy_until).filter(|&t| t != IN_FLIGHT).min())
            .map_or(after + 1, |t| t.max(after + 1))
    }

    /// Run one request arriving at `at` on a free or new instance.
    fn run(
        &mut self,
        name: &str,
        payload: &[u8],
        at: u64,
        mode: InvocationMode,
        caller: &str,
    ) -> Result<SyncOutcome, SimError> {
        self.alive()?;
        let idle_us = self.config.idle_timeout_ms * 1000;
        let f = self
            .functions
            .get_mut(name)
            .ok_or_else(|| SimError::NotFound(name.to_string()))?;
        let mut reclaimed = Vec::new();
        f.instances.retain(|i| {
            let stale = i.busy_until != IN_FLIGHT && i.busy_until.saturating_add(idle_us) <= at;
            if stale {
                reclaimed.push(i.id);
            }
            !stale
        });
        for id in reclaimed {
            self.trace.record(at, TraceKind::Reclaim, name, Some(id), "")?;
        }
        let f = self.functions.get_mut(name).expect("present");
        let (idx, cold) = match f.instances.iter().position(|i| i.busy_until <= at) {
            Some(i) => (i, false),
            None if f.instances.len() < f.def.concurrency_limit as usize => {
                let id = self.next_instance;
                self.next_instance += 1;
                f.instances.push(Instance {
                    id,
                    busy_until: 0,
                    slot: None,
                });
                f.peak_instances = f.peak_instances.max(f.instances.len());
                (f.instances.len() - 1, true)
            }
            None => {
                self.trace
                    .record(at, TraceKind::Throttle, name, None, format!("mode={mode} from={caller}"))?;
                return Err(SimError::Throttled(name.to_string()));
            }
        };
        let index = f.starts;
        f.starts += 1;
        let inst = &mut f.instances[idx];
        inst.busy_until = IN_FLIGHT;
        let instance_id = inst.id;
        let mut slot = inst.slot.take();
        let def = f.def.clone();
        let handler = f.handler.clone();

        self.trace.record(
            at,
            TraceKind::Start,
            name,
            Some(instance_id),
            format!("mode={mode} index={index} bytes={} from={caller}", payload.len()),
        )?;
        let mut start = at;
        if cold {
            self.trace.record(at, TraceKind::ColdStart, name, Some(instance_id), "")?;
            start += self.config.cold_start_ms * 1000;
        }
        let injected = self
            .config
            .failure_injections
            .iter()
            .any(|fi| fi.function == name && fi.invocation_index == index);

        let mut inv = Invocation {
            platform: self,
            function: name.to_string(),
            instance: instance_id,
            slot: &mut slot,
            env: def.env.clone(),
            memory_mb: def.memory_mb,
            cold,
            now_us: start,
            own_us: 0,
            callee_billed_ms: 0,
        };
        let result = if injected {
            Err(HandlerError::Failed("injected failure".into()))
        } else {
            handler.handle(&mut inv, payload)
        };
        let (end, own, callee) = (inv.now_us, inv.own_us, inv.callee_billed_ms);
        if self.trace.crashed() || matches!(result, Err(HandlerError::Sim(SimError::Crashed))) {
            return Err(SimError::Crashed);
        }
        let billed = billed_ms(own) + callee;
        if let Some(inst) = self
            .functions
            .get_mut(name)
            .and_then(|f| f.instances.iter_mut().find(|i| i.id == instance_id))
        {
            inst.busy_until = end;
            inst.slot = slot;
        }
        self.last_end_us = self.last_end_us.max(end);
        let bill = self.bills.entry(name.to_string()).or_default();
        bill.invocations += 1;
        bill.billed_ms += billed;
        bill.duration_cost += self.config.billing.duration_cost(def.arch, def.memory_mb, billed);
        bill.request_cost += self.config.billing.per_request;
        let response = result.map_err(|e| e.to_string());
        self.trace.record(
            end,
            TraceKind::End,
            name,
            Some(instance_id),
            match &response {
                Ok(r) => format!("ok bytes={}", r.len()),
                Err(e) => format!("error={}", e.replace(' ', "_")),
            },
        )?;
        self.trace.record(
            end,
            TraceKind::Bill,
            name,
            Some(instance_id),
            format!("billed_ms={billed} memory_mb={} arch={}", def.memory_mb, def.arch),
        )?;
        Ok(SyncOutcome {
            response,
            billed_ms: billed,
            end_us: end,
        })
    }

    pub fn billing_report(&self) -> BillingReport {
        let mut functions = self.bills.clone();
        for name in self.functions.keys() {
            functions.entry(name.clone()).or_default();
        }
        BillingReport {
            functions,
            store: StoreBill {
                writes: self.store.writes,
                reads: self.store.reads,
                dollars: self.config.billing.store_cost(self.store.writes, self.store.reads),
            },
        }
    }

    fn store_op<T>(
        &mut self,
        t_us: u64,
        kind: TraceKind,
        key: &str,
        op: impl FnOnce(&mut ObjectStore) -> Result<T, SimError>,
    ) -> Result<T, SimError> {
        self.alive()?;
        self.trace.record(t_us, kind, "", None, format!("key={key}"))?;
        op(&mut self.store)
    }
}

fn check_cap(payload: &[u8], mode: InvocationMode) -> Result<(), SimError> {
    if payload.len() > mode.cap() {
        return Err(SimError::PayloadTooLarge {
            size: payload.len(),
            cap: mode.cap(),
        });
    }
    Ok(())
}

impl ObjectStorage for Platform {
    fn put(&mut self, key: &str, bytes: Vec<u8>) -> Result<(), SimError> {
        self.store_op(self.now_us, TraceKind::StorePut, key, |s| s.put(key, bytes))
    }

    fn get(&mut self, key: &str) -> Result<Vec<u8>, SimError> {
        self.store_op(self.now_us, TraceKind::StoreGet, key, |s| s.get(key))
    }

    fn list(&mut self, prefix: &str) -> Result<Vec<String>, SimError> {
        self.store_op(self.now_us, TraceKind::StoreList, prefix, |s| s.list(prefix))
    }

    fn delete(&mut self, key: &str) -> Result<(), SimError> {
        self.store_op(self.now_us, TraceKind::StoreDelete, key, |s| s.delete(key))
    }
}

/// A handler's view of the platform during one request.
pub struct Invocation<'a> {
    platform: &'a mut Platform,
    function: String,
    instance: u64,
    slot: &'a mut Option<Box<dyn Any>>,
    env: EnvEncoding,
    memory_mb: u32,
    cold: bool,
    now_us: u64,
    own_us: u64,
    callee_billed_ms: u64,
}

impl Invocation<'_> {
    pub fn function_name(&self) -> &str {
        &self.function
    }

    pub fn instance_id(&self) -> u64 {
        self.instance
    }

    pub fn env(&self) -> &EnvEncoding {
        &self.env
    }

    pub fn memory_mb(&self) -> u32 {
        self.memory_mb
    }

    pub fn is_cold(&self) -> bool {
        self.cold
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// State that survives between requests on this instance.
    pub fn static_context(&mut self) -> &mut Option<Box<dyn Any>> {
        self.slot
    }

    /// Spend `us` of billed handler time.
    pub fn compute(&mut self, us: u64) {
        self.now_us += us;
        self.own_us += us;
    }

    /// Wait inside the handler; waiting is billed like compute.
    pub fn sleep_ms(&mut self, ms: u64) {
        self.compute(ms * 1000);
    }

    /// Log an application event.
    pub fn record(&mut self, detail: impl Into<String>) -> Result<(), SimError> {
        self.platform
            .trace
            .record(self.now_us, TraceKind::App, &self.function, Some(self.instance), detail)
    }

    /// Call another function and wait for it. The callee's billed duration
    /// is added to this request's bill; transfer time is not.
    pub fn invoke_sync(&mut self, name: &str, payload: &[u8]) -> Result<Vec<u8>, SimError> {
        self.platform.alive()?;
        check_cap(payload, InvocationMode::Sync)?;
        let at = self.now_us
            + self
                .platform
                .config
                .latency_model
                .transfer_us(InvocationMode::Sync, payload.len());
        let out = self
            .platform
            .run(name, payload, at, InvocationMode::Sync, &self.function)?;
        self.now_us = self.now_us.max(out.end_us);
        self.callee_billed_ms += out.billed_ms;
        out.response.map_err(SimError::Handler)
    }

    pub fn invoke_async(&mut self, name: &str, payload: &[u8]) -> Result<(), SimError> {
        let caller = self.function.clone();
        self.platform.enqueue(self.now_us, name, payload, &caller)
    }

    fn store_op<T>(
        &mut self,
        kind: TraceKind,
        key: &str,
        op: impl FnOnce(&mut ObjectStore) -> Result<T, SimError>,
    ) -> Result<T, SimError> {
        let t = self.now_us;
        self.platform.alive()?;
        self.platform
            .trace
            .record(t, kind, &self.function, Some(self.instance), format!("key={key}"))?;
        let latency = self.platform.config.store_latency_ms;
        self.compute(latency * 1000);
        op(&mut self.platform.store)
    }
}

impl ObjectStorage for Invocation<'_> {
    fn put(&mut self, key: &str, bytes: Vec<u8>) -> Result<(), SimError> {
        self.store_op(TraceKind::StorePut, key, |s| s.put(key, bytes))
    }

    fn get(&mut self, key: &str) -> Result<Vec<u8>, SimError> {
        self.store_op(TraceKind::StoreGet, key, |s| s.get(key))
    }

    fn list(&mut self, prefix: &str) -> Result<Vec<String>, SimError> {
        self.store_op(TraceKind::StoreList, prefix, |s| s.list(prefix))
    }

    fn delete(&mut self, key: &str) -> Result<(), SimError> {
        self.store_op(TraceKind::StoreDelete, key, |s| s.delete(key))
    }
}
