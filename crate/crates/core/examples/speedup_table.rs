// Runs a small timing grid and prints the parallel speedup table.

use std::error::Error;

use sfc_locality::analysis;
use sfc_locality::bench::{self, ExperimentConfig, SampleSink};
use sfc_locality::energy::EnergyMeter;
use sfc_locality::LayoutKind;

pub fn run() -> Result<(), Box<dyn Error>> {
    let cfg = ExperimentConfig {
        sizes: vec![6],
        layouts: vec![LayoutKind::RowMajor, LayoutKind::Morton],
        workers: vec![1, 2, 4],
        repetitions: 3,
        ..ExperimentConfig::default()
    };
    let out = bench::run_bench(&cfg, &EnergyMeter::time_only(), &SampleSink::default())?;
    let table = analysis::speedup_table(&out.rows)?;
    print!("{}", analysis::render_speedup_csv(&table));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
