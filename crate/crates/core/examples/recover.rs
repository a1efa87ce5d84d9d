//! Crash a run part way through, relaunch over the same object store and
//! check the sink still matches the reference answer.

use squall::payload::InvocationMode;
use squall::sim::TraceKind;
use squall::workloads::{run_benchmark, BenchConfig, ExecMode, QueryId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = BenchConfig::new(QueryId::Q5, ExecMode::Distributed, InvocationMode::Async);
    cfg.events = 60_000;
    cfg.checkpoint_every = 2;

    let clean = run_benchmark(&cfg)?;
    let records = clean.platform.trace().len() as u64;
    cfg.sim.crash_at = Some(records / 2);

    let run = run_benchmark(&cfg)?;
    println!("launches          {}", run.report.launches);
    for (i, r) in run.recoveries.iter().enumerate() {
        println!(
            "launch {i}: resume epoch {} from checkpoint {:?}, replayed {:?}",
            r.resume_epoch, r.checkpoint, r.replayed
        );
    }
    let commits = run.platform.trace().of_kind(TraceKind::App).filter(|r| r.detail.starts_with("commit")).count();
    println!("commit records    {commits} in final launch");
    println!("windows           {}", run.results.len());
    run.verify()?;
    assert_eq!(run.results, clean.results);
    println!("sink matches the uninterrupted run");
    Ok(())
}
