//! Where the shuffle partitions of one stage land in the next group.

use squall::planner::FunctionGroup;
use squall::runtime::HashRing;

fn main() {
    let code = "0ddba11a";
    for g in [1, 3, 8] {
        let group = FunctionGroup { query_code: code.to_string(), stage_id: 2, size: g };
        let names = group.members().iter().map(ToString::to_string).collect();
        let ring = HashRing::for_group(code, names);
        let start = ring.start(code, 2);
        let dests: Vec<&str> = (1..=g as u32).map(|k| ring.destination(code, 2, k)).collect();
        println!("g={g} start={start}");
        for (k, d) in dests.iter().enumerate() {
            println!("  shuffle {} -> {d}", k + 1);
        }
    }
}
