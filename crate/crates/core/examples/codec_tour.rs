// Walks a small grid in each storage order and prints where every cell lands.
//
// ```text
// cargo run --example codec_tour
// ```

use std::error::Error;

use sfc_locality::codec::{self, dilate, undilate};
use sfc_locality::{Coord2, CurveOrder, LayoutKind, LinearIndex};

pub fn run() -> Result<(), Box<dyn Error>> {
    let order = CurveOrder::new(2)?;
    let side = order.side() as u32;

    for kind in LayoutKind::ALL {
        println!(
            "{} (op cost {} at n={}):",
            kind.name(),
            codec::op_cost(kind, order),
            order.bits()
        );
        for y in 0..side {
            let row: Vec<String> = (0..side)
                .map(|x| {
                    format!(
                        "{:2}",
                        codec::encode(kind, Coord2::new(y, x), order)
                            .map(|i| i.value())
                            .unwrap_or(0)
                    )
                })
                .collect();
            println!("  {}", row.join(" "));
        }
    }

    let walk: Vec<String> = (0..order.cells())
        .map(|i| codec::hilbert_decode(LinearIndex(i), order).map(|c| c.to_string()))
        .collect::<Result<_, _>>()?;
    println!("hilbert walk: {}", walk.join(" "));

    let d = dilate(0b1011);
    println!(
        "dilate(0b1011) = {:#b}, undilated back to {:#b}",
        d.value(),
        undilate(d)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
