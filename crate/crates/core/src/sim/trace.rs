use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    CreateFunction,
    SetConcurrency,
    /// A handler starts on an instance.
    Start,
    ColdStart,
    /// A handler returned; `detail` says how.
    End,
    Bill,
    Throttle,
    Enqueue,
    Duplicate,
    Retry,
    DeadLetter,
    Reclaim,
    StorePut,
    StoreGet,
    StoreList,
    StoreDelete,
    /// Emitted by handler code.
    App,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).expect("kind serializes");
        f.write_str(s.trim_matches('"'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_us: u64,
    pub kind: TraceKind,
    pub function: String,
    pub instance: Option<u64>,
    pub seq: u64,
    pub detail: String,
}

#[derive(Serialize)]
struct ExportRecord<'a> {
    t_ms: f64,
    kind: TraceKind,
    function: &'a str,
    instance: Option<u64>,
    seq: u64,
    detail: &'a str,
}

/// Append-only log of everything the platform does. Recording can be set to
/// fail at a chosen index, which models the whole process dying there.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
    crash_at: Option<u64>,
    crashed: bool,
}

impl Trace {
    pub fn new(crash_at: Option<u64>) -> Self {
        Trace {
            records: Vec::new(),
            crash_at,
            crashed: false,
        }
    }

    pub fn record(
        &mut self,
        t_us: u64,
        kind: TraceKind,
        function: &str,
        instance: Option<u64>,
        detail: impl Into<String>,
    ) -> Result<(), SimError> {
        let seq = self.records.len() as u64;
        if self.crashed || self.crash_at == Some(seq) {
            self.crashed = true;
            return Err(SimError::Crashed);
        }
        self.records.push(TraceRecord {
            t_us,
            kind,
            function: function.to_string(),
            instance,
            seq,
            detail: detail.into(),
        });
        Ok(())
    }

    pub fn crashed(&self) -> bool {
        self.crashed
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn of_kind(&self, kind: TraceKind) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// Line-delimited JSON with fields `t_ms, kind, function, instance, seq, detail`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let e = ExportRecord {
                t_ms: r.t_us as f64 / 1000.0,
                kind: r.kind,
                function: &r.function,
                instance: r.instance,
                seq: r.seq,
                detail: &r.detail,
            };
            out.push_str(&serde_json::to_string(&e).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parse `key=value` pairs out of a record detail.
pub fn detail_field<'a>(detail: &'a str, key: &str) -> Option<&'a str> {
    detail
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}
