// Measures a workload with the RAPL meter. Without RAPL hardware it builds
// a synthetic powercap tree whose package counter rises at 30 W and points
// the meter at it.

use std::error::Error;
use std::time::Duration;

use sfc_locality::energy::fixture::PowercapFixture;
use sfc_locality::energy::{self, DomainKind, EnergyMeter, EnergyReport, RaplDomain};
use sfc_locality::{matmul, CurveOrder, LayoutKind, MatrixF64};

pub fn run() -> Result<(), Box<dyn Error>> {
    let hardware = energy::discover_domains()?;
    let dir = tempfile_dir()?;
    let _driver;
    let counters = if hardware.is_empty() {
        println!("no RAPL domains found, using a synthetic 30 W package");
        let pkg = RaplDomain {
            socket: 0,
            kind: DomainKind::Package,
        };
        let max = 262_143_328_850;
        let fixture = PowercapFixture::create(&dir, &[pkg], max)?;
        _driver = fixture.drive(vec![(pkg, 30.0)], max, Duration::from_millis(1));
        energy::discover_domains_at(fixture.root())?
    } else {
        hardware
    };

    let meter = EnergyMeter::new(counters, 100.0)?;
    let order = CurveOrder::new(7)?;
    let a = MatrixF64::random_seeded(order, LayoutKind::Morton, 1)?;
    let b = MatrixF64::random_seeded(order, LayoutKind::Morton, 2)?;
    let (_, m) = meter.measure(|| {
        for _ in 0..4 {
            std::hint::black_box(matmul(&a, &b, 1).unwrap());
        }
    });
    let report = EnergyReport::from_measurement(&m);
    println!("wall {:.4} s", report.wall_seconds);
    for d in &report.domains {
        println!(
            "  {} socket {}: {:.4} J integrated, {:.4} J from counter difference",
            d.domain.kind.label(),
            d.domain.socket,
            d.joules,
            d.joules_direct
        );
    }
    println!("{}", energy::WALL_POWER_DISCLAIMER);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("sfc-energy-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
