// Replays a few middle output rows of a matmul through a simulated cache
// hierarchy and compares last-level misses across layouts.
//
// Pass an order to change the problem size: `cargo run --release --example cache_locality -- 8`

use std::error::Error;

use sfc_locality::analysis;
use sfc_locality::cachesim::{self, HierarchyConfig, TraceOptions};
use sfc_locality::{CurveOrder, LayoutKind};

pub fn run_with(n: u32) -> Result<(), Box<dyn Error>> {
    let order = CurveOrder::new(n)?;
    let cfg = HierarchyConfig::desk_scale();
    let rows = cachesim::middle_rows(order, 5);
    let results = cachesim::compare_layouts(order, &LayoutKind::ALL, &cfg, rows.clone(), TraceOptions::default())?;

    println!("hierarchy: {}", cfg.to_json());
    for r in &results {
        let ll = r.stats.last_level();
        println!(
            "{:>8}: LL reads {:>8} read misses {:>7} (compulsory {})",
            r.layout.name(),
            ll.reads,
            ll.read_misses,
            ll.compulsory_misses
        );
    }
    if let Some(ratio) = analysis::ho_mo_ratio(&results) {
        println!("HO/MO last-level read-miss ratio: {ratio:.4}");
    }
    Ok(())
}

pub fn run() -> Result<(), Box<dyn Error>> {
    run_with(5)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(6);
    run_with(n)
}
