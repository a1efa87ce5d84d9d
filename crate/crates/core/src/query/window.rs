use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::batch::RecordBatch;
use super::types::{ScalarType, Value};
use super::QueryError;

/// Event-time window definition. All durations in milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowSpec {
    Tumbling { size_ms: i64 },
    /// Requires `slide_ms <= size_ms`.
    Sliding { size_ms: i64, slide_ms: i64 },
    /// Runs of events per key separated by gaps larger than `gap_ms`.
    Session { gap_ms: i64, key_columns: Vec<String> },
}

impl WindowSpec {
    pub fn tumbling(size_ms: i64) -> Self {
        WindowSpec::Tumbling { size_ms }
    }

    pub fn sliding(size_ms: i64, slide_ms: i64) -> Self {
        WindowSpec::Sliding { size_ms, slide_ms }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        let bad = |m: &str| Err(QueryError::InvalidWindow(m.to_string()));
        match *self {
            WindowSpec::Tumbling { size_ms } if size_ms <= 0 => bad("size must be positive"),
            WindowSpec::Sliding { size_ms, slide_ms } if size_ms <= 0 || slide_ms <= 0 => {
                bad("size and slide must be positive")
            }
            WindowSpec::Sliding { size_ms, slide_ms } if slide_ms > size_ms => {
                bad("slide must not exceed size")
            }
            WindowSpec::Session { gap_ms, .. } if gap_ms <= 0 => bad("gap must be positive"),
            _ => Ok(()),
        }
    }

    /// Interval at which results are produced: the size for tumbling
    /// windows, the slide for sliding ones, the gap for sessions.
    pub fn trigger_interval_ms(&self) -> i64 {
        match *self {
            WindowSpec::Tumbling { size_ms } => size_ms,
            WindowSpec::Sliding { slide_ms, .. } => slide_ms,
            WindowSpec::Session { gap_ms, .. } => gap_ms,
        }
    }

    /// Window closed by micro-batch `epoch`, when epochs follow the trigger
    /// interval from time zero. Sessions have no fixed windows.
    pub fn epoch_window(&self, epoch: u64) -> Option<WindowId> {
        let start = epoch as i64 * self.trigger_interval_ms();
        match *self {
            WindowSpec::Tumbling { size_ms } | WindowSpec::Sliding { size_ms, .. } => {
                Some(WindowId::new(start, start + size_ms))
            }
            WindowSpec::Session { .. } => None,
        }
    }
}

/// Half-open window `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowId {
    pub start_ms: i64,
    pub end_ms: i64,
}

impl WindowId {
    pub fn new(start_ms: i64, end_ms: i64) -> Self {
        WindowId { start_ms, end_ms }
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start_ms <= ts && ts < self.end_ms
    }
}

impl fmt::Display for WindowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start_ms, self.end_ms)
    }
}

/// Windows containing `ts` under a tumbling or sliding spec, ascending.
pub fn windows_for(ts: i64, spec: &WindowSpec) -> Vec<WindowId> {
    match *spec {
        WindowSpec::Tumbling { size_ms } => {
            let start = ts.div_euclid(size_ms) * size_ms;
            vec![WindowId::new(start, start + size_ms)]
        }
        WindowSpec::Sliding { size_ms, slide_ms } => {
            let last = ts.div_euclid(slide_ms);
            // First k with k*slide + size > ts.
            let first = (ts - size_ms).div_euclid(slide_ms) + 1;
            (first..=last)
                .map(|k| WindowId::new(k * slide_ms, k * slide_ms + size_ms))
                .collect()
        }
        WindowSpec::Session { .. } => Vec::new(),
    }
}

/// Group rows of `batch` into event-time windows, ordered by window (and by
/// key for sessions). Row order within each window follows input order.
pub fn assign_windows(
    batch: &RecordBatch,
    ts_column: &str,
    spec: &WindowSpec,
) -> Result<Vec<(WindowId, RecordBatch)>, QueryError> {
    spec.validate()?;
    let ti = batch.schema().index_of(ts_column)?;
    if batch.schema().field(ti).data_type != ScalarType::Timestamp {
        return Err(QueryError::TypeMismatch(format!(
            "window column {ts_column} is {}, expected Timestamp",
            batch.schema().field(ti).data_type
        )));
    }
    let ts_col = batch.column(ti);
    let ts = |row: usize| match ts_col.value(row) {
        Value::Timestamp(t) => Some(t),
        _ => None,
    };

    if let WindowSpec::Session { gap_ms, key_columns } = spec {
        return assign_sessions(batch, &ts, *gap_ms, key_columns);
    }

    let mut windows: BTreeMap<WindowId, Vec<usize>> = BTreeMap::new();
    for row in 0..batch.num_rows() {
        let Some(t) = ts(row) else { continue };
        for w in windows_for(t, spec) {
            windows.entry(w).or_default().push(row);
        }
    }
    Ok(windows
        .into_iter()
        .map(|(w, rows)| (w, batch.take(&rows)))
        .collect())
}

fn assign_sessions(
    batch: &RecordBatch,
    ts: &dyn Fn(usize) -> Option<i64>,
    gap_ms: i64,
    key_columns: &[String],
) -> Result<Vec<(WindowId, RecordBatch)>, QueryError> {
    let key_idx = key_columns
        .iter()
        .map(|k| batch.schema().index_of(k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut per_key: BTreeMap<Vec<Value>, Vec<(i64, usize)>> = BTreeMap::new();
    for row in 0..batch.num_rows() {
        let Some(t) = ts(row) else { continue };
        let key = key_idx.iter().map(|&i| batch.column(i).value(row)).collect();
        per_key.entry(key).or_default().push((t, row));
    }
    let mut out: Vec<(WindowId, Vec<Value>, Vec<usize>)> = Vec::new();
    for (key, mut events) in per_key {
        events.sort_by_key(|&(t, row)| (t, row));
        let mut run: Vec<usize> = Vec::new();
        let (mut first, mut last) = (events[0].0, events[0].0);
        for (t, row) in events {
            if !run.is_empty() && t - last > gap_ms {
                out.push((WindowId::new(first, last + gap_ms), key.clone(), std::mem::take(&mut run)));
                first = t;
            }
            last = t;
            run.push(row);
        }
        out.push((WindowId::new(first, last + gap_ms), key, run));
    }
    out.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    Ok(out
        .into_iter()
        .map(|(w, _, mut rows)| {
            rows.sort_unstable();
            (w, batch.take(&rows))
        })
        .collect())
}
