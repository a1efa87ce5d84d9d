//! Build a small windowless aggregate by hand, split it into stages and
//! show what each function group runs.

use squall::planner::{assign_groups, partition_plan, query_code, PlanBuilder};
use squall::query::{col, lit, AggExpr, AggFunc, SortKey};
use squall::workloads::nexmark::bid_schema;
use squall::workloads::QueryId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plan = PlanBuilder::source("bid", bid_schema())
        .filter(col("price").gt(lit(500)))?
        .aggregate(
            vec![(col("auction"), "auction")],
            vec![
                AggExpr::new(AggFunc::Count, col("price"), "bids"),
                AggExpr::new(AggFunc::Max, col("price"), "top"),
            ],
        )?
        .sort(vec![SortKey::desc("bids")])?
        .build();
    println!("plan operators: {:?}\n", plan.operators());

    for (label, plan) in [("hand-built", plan), ("q4", QueryId::Q4.plan()?)] {
        let code = query_code(&plan);
        let dag = assign_groups(&partition_plan(&plan)?, 4, &code)?;
        println!("{label}: query code {code}, {} functions", dag.function_count());
        for s in &dag.stages {
            let next = s.next.as_ref().map_or("-".to_string(), |g| g.label());
            println!(
                "  stage {} x{:<2} stateful={:<5} next={next}",
                s.stage_id, s.group_size, s.stateful
            );
            for (port, root) in s.outputs.iter().enumerate() {
                println!("    port {port}: {}", root.operators().join(" <- "));
            }
        }
        println!();
    }
    Ok(())
}
