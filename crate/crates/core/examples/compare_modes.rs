//! Latency and cost of every query across execution and invocation modes.

use squall::payload::InvocationMode;
use squall::workloads::{run_benchmark, BenchConfig, ExecMode, QueryId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:<4} {:<11} {:<5} {:>10} {:>6} {:>14}", "q", "mode", "call", "latency ms", "calls", "usd");
    for q in QueryId::ALL {
        for mode in [ExecMode::Centralized, ExecMode::Distributed] {
            for invoke in [InvocationMode::Sync, InvocationMode::Async] {
                let mut cfg = BenchConfig::new(q, mode, invoke);
                cfg.events = 40_000;
                cfg.events_per_sec = 2_000;
                let r = run_benchmark(&cfg)?.report;
                println!(
                    "{:<4} {:<11} {:<5} {:>10.1} {:>6} {:>14}",
                    q.to_string(),
                    mode.to_string(),
                    invoke.to_string(),
                    r.latency_ms,
                    r.invocations,
                    r.dollars.to_string()
                );
            }
        }
    }
    Ok(())
}
