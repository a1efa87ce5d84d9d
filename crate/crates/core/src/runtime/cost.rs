use serde::{Deserialize, Serialize};

use crate::sim::Invocation;

/// Handler compute time charged to the simulated clock.
///
/// Times are for a full vCPU; smaller memory sizes get a proportional CPU
/// share and run slower, as on the real platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Runtime dispatch per request.
    pub request_us: u64,
    /// One-time context initialisation per instance.
    pub init_us: u64,
    /// Envelope parsing, decompression and encoding.
    pub byte_ns: u64,
    /// Per input row per operator in the stage.
    pub row_op_ns: u64,
    /// Memory size that buys one full vCPU.
    pub full_cpu_mb: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            request_us: 1_000,
            init_us: 20_000,
            byte_ns: 2,
            row_op_ns: 57,
            full_cpu_mb: 1769,
        }
    }
}

impl CostModel {
    /// A model that charges nothing.
    pub fn free() -> Self {
        CostModel {
            request_us: 0,
            init_us: 0,
            byte_ns: 0,
            row_op_ns: 0,
            full_cpu_mb: 1769,
        }
    }

    fn scaled(&self, ns: u64, memory_mb: u32) -> u64 {
        let share = f64::from(memory_mb.min(self.full_cpu_mb)) / f64::from(self.full_cpu_mb);
        (ns as f64 / share / 1000.0).ceil() as u64
    }

    pub fn charge_request(&self, inv: &mut Invocation<'_>) {
        let us = self.scaled(self.request_us * 1000, inv.memory_mb());
        inv.compute(us);
    }

    pub fn charge_init(&self, inv: &mut Invocation<'_>, context_bytes: usize) {
        let ns = self.init_us * 1000 + self.byte_ns * context_bytes as u64;
        let us = self.scaled(ns, inv.memory_mb());
        inv.compute(us);
    }

    pub fn charge_bytes(&self, inv: &mut Invocation<'_>, bytes: usize) {
        let us = self.scaled(self.byte_ns * bytes as u64, inv.memory_mb());
        inv.compute(us);
    }

    pub fn charge_rows(&self, inv: &mut Invocation<'_>, rows: usize, operators: usize) {
        let us = self.scaled(self.row_op_ns * (rows * operators) as u64, inv.memory_mb());
        inv.compute(us);
    }
}
