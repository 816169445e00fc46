// Saves a Hilbert-ordered matrix to the binary fixture format, reads it back
// and spot-checks a few elements.

use std::error::Error;

use sfc_locality::{Coord2, CurveOrder, LayoutKind, MatrixF64};

pub fn run() -> Result<(), Box<dyn Error>> {
    let order = CurveOrder::new(4)?;
    let m = MatrixF64::from_fn(order, LayoutKind::Hilbert, |y, x| f64::from(y) * 100.0 + f64::from(x))?;

    let mut bytes = Vec::new();
    m.write_to(&mut bytes)?;
    println!("{} bytes, header {:02x?}", bytes.len(), &bytes[..16]);

    let back = MatrixF64::read_from(&bytes[..])?;
    assert!(back.bit_eq(&m));
    for c in [Coord2::new(0, 0), Coord2::new(3, 7), Coord2::new(15, 15)] {
        println!("{c} = {}", back.get(c)?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
