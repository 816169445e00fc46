// Multiplies the same pair of matrices stored in all three layouts and
// checks that the products agree bit for bit.

use std::error::Error;
use std::time::Instant;

use sfc_locality::bench;
use sfc_locality::{matmul, CurveOrder, LayoutKind};

pub fn run() -> Result<(), Box<dyn Error>> {
    let order = CurveOrder::new(6)?;
    let (a, b) = bench::input_pair(order, 42)?;
    let reference = matmul(&a, &b, 1)?;

    for layout in LayoutKind::ALL {
        let (la, lb) = (a.convert(layout)?, b.convert(layout)?);
        for workers in [1, 4] {
            let t = Instant::now();
            let c = matmul(&la, &lb, workers)?;
            let elapsed = t.elapsed();
            let same = c.convert(LayoutKind::RowMajor)?.bit_eq(&reference);
            println!(
                "{:>8} workers={workers} {:>9.3} ms checksum={} identical={same}",
                layout.name(),
                elapsed.as_secs_f64() * 1e3,
                bench::checksum(&c)
            );
            if !same {
                return Err(format!("{} result differs from row-major", layout.name()).into());
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
