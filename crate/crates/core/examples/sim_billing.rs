//! Register two functions on the simulated platform, chain them and read
//! the trace and bill.

use std::rc::Rc;

use squall::payload::Codec;
use squall::planner::EnvEncoding;
use squall::sim::{FunctionDef, Handler, HandlerError, Invocation, Platform, SimConfig};

fn env() -> EnvEncoding {
    EnvEncoding::Inline { codec: Codec::None, bytes: Vec::new() }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut p = Platform::new(SimConfig::default().seed(4));

    let leaf: Rc<dyn Handler> = Rc::new(|inv: &mut Invocation<'_>, payload: &[u8]| -> Result<Vec<u8>, HandlerError> {
        inv.compute(30_000);
        Ok(payload.to_vec())
    });
    let front: Rc<dyn Handler> = Rc::new(|inv: &mut Invocation<'_>, payload: &[u8]| -> Result<Vec<u8>, HandlerError> {
        inv.compute(10_000);
        inv.invoke_async("leaf", payload)?;
        Ok(b"queued".to_vec())
    });
    p.create_function(FunctionDef::new("leaf", env()).memory(512), leaf)?;
    p.create_function(FunctionDef::new("front", env()).memory(1024), front)?;

    for i in 0..3u8 {
        p.invoke_async("front", &[i])?;
    }
    p.run_until_quiescent()?;

    print!("{}", p.trace().export());
    println!();
    print!("{}", p.billing_report().to_text());
    Ok(())
}
