//! Measures how fast this machine runs each benchmark plan in one process,
//! as a reference for the per-row constant of the simulated cost model.

use std::time::Instant;

use squall::workloads::{QueryId, Source};

fn main() {
    let events = 50_000;
    for q in QueryId::ALL {
        let source = Source::generate(q, events, 5_000, 7).expect("source");
        let (start, end) = q.epoch_range(0);
        let tables = source.tables(q, &source.offsets(start, end)).expect("tables");
        let rows: usize = tables.iter().map(|t| t.num_rows()).sum();
        let plan = q.plan().expect("plan");
        let ops = plan.operators().len();
        let t = Instant::now();
        let reps = 5;
        for _ in 0..reps {
            plan.execute(&tables).expect("execute");
        }
        let ns = t.elapsed().as_nanos() as f64 / reps as f64;
        println!(
            "{q:<4} rows {rows:>6}  operators {ops:>2}  {:>8.2} ms  {:>6.0} ns per row-operator",
            ns / 1e6,
            ns / (rows * ops) as f64
        );
    }
}
