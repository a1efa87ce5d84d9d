//! Encode a batch of bids, split it under both invocation caps and read
//! the pieces back.

use std::sync::Arc;

use squall::payload::{
    decode_payload, split_for_invocation, Codec, InvocationMode, PayloadMeta, Qid, Uuid,
};
use squall::query::RecordBatch;
use squall::workloads::nexmark::{gen_nexmark, to_batches};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let log = gen_nexmark(200_000, 10_000, 3);
    let [_, _, bids] = to_batches(log.events())?;
    println!("{} bids, {} bytes decoded", bids.num_rows(), bids.byte_size());

    let qid = Qid::new("5eed0001", "e0", 0)?;
    let meta = PayloadMeta::new(Uuid::new(qid, 1, 1)?, 0, 1);
    let schema = Arc::clone(bids.schema());
    for mode in [InvocationMode::Sync, InvocationMode::Async] {
        for codec in Codec::ALL {
            let pieces = split_for_invocation(&schema, std::slice::from_ref(&bids), &meta, mode, codec)?;
            let largest = pieces.iter().map(Vec::len).max().unwrap_or(0);
            let mut back = Vec::new();
            for p in &pieces {
                back.extend(decode_payload(p)?.0);
            }
            assert_eq!(RecordBatch::concat(&schema, &back)?, bids);
            println!(
                "{:<5} {:<6} {:>3} payloads, largest {largest:>7} of {} bytes",
                mode.to_string(),
                codec.to_string(),
                pieces.len(),
                mode.cap()
            );
        }
    }
    Ok(())
}
