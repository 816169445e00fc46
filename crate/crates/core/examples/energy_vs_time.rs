// Builds the energy-vs-time gnuplot dataset from bench rows. The rows here
// are made up so the example runs anywhere; feed `sfc bench --energy` output
// to `sfc energy-time` for real data.

use std::error::Error;

use sfc_locality::analysis;
use sfc_locality::bench::{self, BENCH_CSV_HEADER};

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut csv = String::from(BENCH_CSV_HEADER);
    csv.push('\n');
    for (layout, scale) in [("rowmajor", 1.0), ("morton", 1.3), ("hilbert", 3.1)] {
        for workers in [1u32, 2, 4, 8] {
            let wall = 0.8 * scale / f64::from(workers);
            let pkg = wall * (40.0 + 8.0 * f64::from(workers));
            csv.push_str(&format!(
                "{layout},10,{workers},0,42,{wall:.5},{pkg:.4},{:.4},{:.4},0,performance,2600000\n",
                pkg * 0.7,
                wall * 5.0
            ));
        }
    }
    let rows = bench::read_bench_csv(csv.as_bytes())?;
    let series = analysis::energy_time(&rows)?;
    print!("{}", analysis::render_energy_dat(&series));
    println!("---");
    print!(
        "{}",
        analysis::render_energy_gnuplot(&series, "energy_time.dat", "energy_time.png")
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
