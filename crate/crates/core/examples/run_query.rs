//! Run one benchmark query end to end and compare with the reference.

use squall::payload::InvocationMode;
use squall::workloads::{run_benchmark, BenchConfig, ExecMode, QueryId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query: QueryId = std::env::args().nth(1).unwrap_or_else(|| "q4".into()).parse()?;
    let mut cfg = BenchConfig::new(query, ExecMode::Distributed, InvocationMode::Async);
    cfg.events = 50_000;
    let run = run_benchmark(&cfg)?;
    print!("{}", run.report.to_text());
    run.verify()?;
    for (window, rows) in run.results.iter().take(2) {
        println!("{window}: {} rows, first {:?}", rows.len(), rows.first());
    }
    Ok(())
}
