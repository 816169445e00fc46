// Streams the memory-access trace of one output row and summarises it.

use std::error::Error;

use sfc_locality::cachesim::{self, AccessKind, CAccess, TraceOptions};
use sfc_locality::{CurveOrder, LayoutKind};

pub fn run() -> Result<(), Box<dyn Error>> {
    let order = CurveOrder::new(3)?;
    for c_access in [CAccess::InRegister, CAccess::PerStep] {
        let opts = TraceOptions { c_access, base: 0 };
        let trace = cachesim::matmul_trace(order, LayoutKind::Morton, 4..5, opts)?;
        let records: Vec<_> = trace.collect();
        let writes = records.iter().filter(|r| r.kind == AccessKind::Write).count();
        println!("{c_access:?}: {} records, {writes} writes", records.len());
        let head: Vec<String> = records
            .iter()
            .take(6)
            .map(|r| format!("{:?}@{:#x}", r.kind, r.address))
            .collect();
        println!("  {}", head.join(" "));

        let mut buf = Vec::new();
        cachesim::write_trace(records.iter().copied(), &mut buf)?;
        println!("  {} bytes on disk", buf.len());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
