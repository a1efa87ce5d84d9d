use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use squall::payload::InvocationMode;
use squall::workloads::{run_benchmark, BenchConfig, ExecMode, QueryId};

/// Run one benchmark query on the simulated platform.
#[derive(Debug, Parser)]
#[command(name = "bench")]
struct Args {
    /// q1, q2, q3, q4, q5 or ysb
    #[arg(long)]
    query: QueryId,
    /// centralized or distributed
    #[arg(long, default_value = "distributed")]
    mode: ExecMode,
    /// Function memory in MB
    #[arg(long, default_value_t = 2048)]
    memory: u32,
    /// sync or async
    #[arg(long, default_value = "async")]
    invoke: InvocationMode,
    #[arg(long, default_value_t = 10_000)]
    events: u64,
    /// Events per second of event time
    #[arg(long, default_value_t = 1_000)]
    eps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for the report, trace and sink files
    #[arg(long)]
    report: Option<PathBuf>,
    /// Compare the sink with the reference answer
    #[arg(long)]
    verify: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = BenchConfig::new(args.query, args.mode, args.invoke);
    cfg.memory_mb = args.memory;
    cfg.events = args.events;
    cfg.events_per_sec = args.eps;
    cfg.seed = args.seed;

    let run = match run_benchmark(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("bench: {e}");
            return ExitCode::from(1);
        }
    };
    print!("{}", run.report.to_text());

    if let Some(dir) = &args.report {
        if let Err(e) = write_report(dir, &run) {
            eprintln!("bench: writing {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    }
    if args.verify {
        match run.verify() {
            Ok(()) => println!("verify              ok ({} windows)", run.reference.len()),
            Err(e) => {
                eprintln!("verify: {e}");
                return ExitCode::from(3);
            }
        }
    }
    if run.report.error.is_some() {
        return ExitCode::from(4);
    }
    ExitCode::SUCCESS
}

fn write_report(dir: &Path, run: &squall::workloads::BenchRun) -> std::io::Result<()> {
    fs::create_dir_all(dir.join("sink"))?;
    fs::write(dir.join("report.txt"), run.report.to_text())?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&run.report).expect("report serializes"),
    )?;
    fs::write(dir.join("trace.jsonl"), run.platform.trace().export())?;
    fs::write(dir.join("billing.txt"), run.platform.billing_report().to_text())?;
    for (window, rows) in &run.results {
        let text: String = rows
            .iter()
            .map(|r| r.iter().map(ToString::to_string).collect::<Vec<_>>().join("\t") + "\n")
            .collect();
        fs::write(dir.join("sink").join(format!("{window}.tsv")), text)?;
    }
    Ok(())
}
