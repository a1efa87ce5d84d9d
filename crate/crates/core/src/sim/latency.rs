use serde::{Deserialize, Serialize};

use crate::payload::InvocationMode;

/// Payload size to transfer time, interpolated linearly between measured
/// points and extrapolated along the last segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// `(bytes, milliseconds)`, sorted by size.
    pub sync: Vec<(u64, f64)>,
    pub asynchronous: Vec<(u64, f64)>,
}

impl Default for LatencyModel {
    /// Measured round trips for 1.5 KB to 15 MB payloads.
    fn default() -> Self {
        let sizes = [1_500, 15_000, 150_000, 1_500_000, 15_000_000];
        LatencyModel {
            sync: sizes.into_iter().zip([20.0, 20.0, 36.0, 281.0, 2201.0]).collect(),
            asynchronous: sizes.into_iter().zip([30.0, 44.0, 66.0, 785.0, 6054.0]).collect(),
        }
    }
}

impl LatencyModel {
    /// A model that adds no transfer time.
    pub fn zero() -> Self {
        LatencyModel {
            sync: vec![(0, 0.0)],
            asynchronous: vec![(0, 0.0)],
        }
    }

    pub fn transfer_ms(&self, mode: InvocationMode, bytes: usize) -> f64 {
        let table = match mode {
            InvocationMode::Sync => &self.sync,
            InvocationMode::Async => &self.asynchronous,
        };
        interpolate(table, bytes as u64)
    }

    pub fn transfer_us(&self, mode: InvocationMode, bytes: usize) -> u64 {
        (self.transfer_ms(mode, bytes) * 1000.0).round().max(0.0) as u64
    }
}

fn interpolate(table: &[(u64, f64)], x: u64) -> f64 {
    match table {
        [] => 0.0,
        [(_, y)] => *y,
        _ => {
            if x <= table[0].0 {
                return table[0].1;
            }
            let i = table
                .windows(2)
                .position(|w| x <= w[1].0)
                .unwrap_or(table.len() - 2);
            let ((x0, y0), (x1, y1)) = (table[i], table[i + 1]);
            let t = (x as f64 - x0 as f64) / (x1 as f64 - x0 as f64);
            y0 + t * (y1 - y0)
        }
    }
}
