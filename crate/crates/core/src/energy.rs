//! RAPL energy metering through the Linux powercap tree.
//!
//! Cumulative counters are sampled at a fixed rate while a workload runs.
//! Consecutive samples are differentiated into a power log, and the power log
//! is integrated back to energy with the trapezoidal rule. The plain sum of
//! counter deltas is reported alongside so the two can be compared.
//!
//! RAPL counters tick in units of roughly 15.3 µJ; the powercap files expose
//! them in microjoules, which are converted to joules without rounding.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::fmt::sig;

/// Overrides the powercap root, mainly for fixture trees.
pub const POWERCAP_ROOT_ENV: &str = "SFC_POWERCAP_ROOT";
pub const DEFAULT_POWERCAP_ROOT: &str = "/sys/class/powercap";

pub const DEFAULT_RATE_HZ: f64 = 10.0;

/// Approximate RAPL energy status unit on Sandy Bridge, for reference only.
pub const RAPL_ENERGY_UNIT_J: f64 = 15.3e-6;

pub const WALL_POWER_DISCLAIMER: &str = "RAPL covers CPU packages and DRAM only; on a dual E5-2670 \
     system these accounted for roughly 38% of wall power with all cores busy.";

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("permission denied reading {0}")]
    PermissionDenied(PathBuf),
    #[error("malformed powercap file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("sampling rate {0} Hz outside 1..=1000")]
    InvalidRate(f64),
    #[error("integration needs at least 2 power points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum DomainKind {
    Package,
    PowerPlane0,
    Dram,
}

impl DomainKind {
    pub const ALL: [DomainKind; 3] = [DomainKind::Package, DomainKind::PowerPlane0, DomainKind::Dram];

    pub fn label(self) -> &'static str {
        match self {
            DomainKind::Package => "package",
            DomainKind::PowerPlane0 => "pp0",
            DomainKind::Dram => "dram",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RaplDomain {
    pub socket: u32,
    pub kind: DomainKind,
}

/// A readable energy counter discovered under the powercap root.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainCounter {
    pub domain: RaplDomain,
    pub energy_path: PathBuf,
    pub max_range_j: f64,
}

fn read_trimmed(path: &Path) -> Result<String, EnergyError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s.trim().to_owned()),
        Err(e) if e.kind() == io::ErrorKind::PermissionDenied => Err(EnergyError::PermissionDenied(path.to_owned())),
        Err(e) => Err(e.into()),
    }
}

fn read_microjoules(path: &Path) -> Result<f64, EnergyError> {
    let text = read_trimmed(path)?;
    let uj: u64 = text.parse().map_err(|_| EnergyError::Malformed {
        path: path.to_owned(),
        reason: format!("expected an integer, got {text:?}"),
    })?;
    Ok(uj as f64 / 1e6)
}

impl DomainCounter {
    pub fn read_joules(&self) -> Result<f64, EnergyError> {
        read_microjoules(&self.energy_path)
    }
}

pub fn powercap_root() -> PathBuf {
    std::env::var_os(POWERCAP_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_POWERCAP_ROOT))
}

/// Socket number from a zone directory name like `intel-rapl:1:0`.
fn socket_from_dir(dir: &str) -> Option<u32> {
    dir.split(':').nth(1)?.parse().ok()
}

fn classify(zone_name: &str, dir_name: &str) -> Option<RaplDomain> {
    if let Some(socket) = zone_name.strip_prefix("package-") {
        return Some(RaplDomain {
            socket: socket.parse().ok()?,
            kind: DomainKind::Package,
        });
    }
    let kind = match zone_name {
        "core" => DomainKind::PowerPlane0,
        "dram" => DomainKind::Dram,
        _ => return None,
    };
    Some(RaplDomain {
        socket: socket_from_dir(dir_name)?,
        kind,
    })
}

fn visit_zone(dir: &Path, found: &mut Vec<DomainCounter>) -> Result<(), EnergyError> {
    let dir_name = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
    let name_file = dir.join("name");
    if name_file.is_file() {
        let zone = read_trimmed(&name_file)?;
        if let Some(domain) = classify(&zone, &dir_name) {
            if !found.iter().any(|c| c.domain == domain) {
                let energy_path = dir.join("energy_uj");
                // probe once so an unreadable counter surfaces at discovery time
                read_microjoules(&energy_path)?;
                let max_range_j = read_microjoules(&dir.join("max_energy_range_uj"))?;
                found.push(DomainCounter {
                    domain,
                    energy_path,
                    max_range_j,
                });
            }
        }
    }
    // nested sub-zones, e.g. intel-rapl:0/intel-rapl:0:0
    let prefix = format!("{dir_name}:");
    for entry in sorted_entries(dir)? {
        let child_name = entry.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if child_name.starts_with(&prefix) && entry.is_dir() {
            visit_zone(&entry, found)?;
        }
    }
    Ok(())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, EnergyError> {
    let mut entries = match fs::read_dir(dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect::<Vec<_>>(),
        Err(e) if e.kind() == io::ErrorKind::PermissionDenied => {
            return Err(EnergyError::PermissionDenied(dir.to_owned()))
        }
        Err(e) => return Err(e.into()),
    };
    entries.sort();
    Ok(entries)
}

/// Energy domains under `root`. A missing root yields an empty list.
pub fn discover_domains_at(root: &Path) -> Result<Vec<DomainCounter>, EnergyError> {
    if !root.is_dir() {
        return Ok(Vec::new());
    }
    let mut found = Vec::new();
    for entry in sorted_entries(root)? {
        let name = entry.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if name.contains("rapl") && entry.is_dir() {
            visit_zone(&entry, &mut found)?;
        }
    }
    found.sort_by_key(|c| c.domain);
    Ok(found)
}

/// Energy domains under [`powercap_root`].
pub fn discover_domains() -> Result<Vec<DomainCounter>, EnergyError> {
    discover_domains_at(&powercap_root())
}

/// Energy consumed between two counter readings, assuming at most one wrap.
pub fn counter_delta(prev: f64, next: f64, max_range: f64) -> f64 {
    if next >= prev {
        next - prev
    } else {
        next + max_range - prev
    }
}

// ---------------------------------------------------------------------------
// Sampling

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    /// Seconds since the start of the measurement.
    pub t: f64,
    pub cumulative_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSeries {
    pub domain: RaplDomain,
    pub max_range_j: f64,
    pub samples: Vec<EnergySample>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Measurement {
    pub series: Vec<DomainSeries>,
    pub wall_seconds: f64,
    /// Sampler problems encountered while the workload ran.
    pub warnings: Vec<String>,
}

struct SampleBuffer<'a> {
    counters: &'a [DomainCounter],
    start: Instant,
    series: Vec<DomainSeries>,
    warnings: Vec<String>,
}

impl<'a> SampleBuffer<'a> {
    fn new(counters: &'a [DomainCounter], start: Instant) -> Self {
        Self {
            counters,
            start,
            series: counters
                .iter()
                .map(|c| DomainSeries {
                    domain: c.domain,
                    max_range_j: c.max_range_j,
                    samples: Vec::new(),
                })
                .collect(),
            warnings: Vec::new(),
        }
    }

    fn take(&mut self) {
        for (counter, series) in self.counters.iter().zip(&mut self.series) {
            match counter.read_joules() {
                Ok(j) => {
                    let mut t = self.start.elapsed().as_secs_f64();
                    if let Some(last) = series.samples.last() {
                        if t <= last.t {
                            t = last.t + 1e-9;
                        }
                    }
                    series.samples.push(EnergySample { t, cumulative_j: j });
                }
                Err(e) => self.warnings.push(format!("{}: {e}", counter.energy_path.display())),
            }
        }
    }
}

/// Samples a fixed set of energy counters around a workload.
#[derive(Debug, Clone)]
pub struct EnergyMeter {
    counters: Vec<DomainCounter>,
    period: Duration,
}

impl EnergyMeter {
    pub fn new(counters: Vec<DomainCounter>, rate_hz: f64) -> Result<Self, EnergyError> {
        if !(1.0..=1000.0).contains(&rate_hz) {
            return Err(EnergyError::InvalidRate(rate_hz));
        }
        Ok(Self {
            counters,
            period: Duration::from_secs_f64(1.0 / rate_hz),
        })
    }

    /// A meter without counters: measures wall time only.
    pub fn time_only() -> Self {
        Self {
            counters: Vec::new(),
            period: Duration::from_secs_f64(1.0 / DEFAULT_RATE_HZ),
        }
    }

    pub fn discover(rate_hz: f64) -> Result<Self, EnergyError> {
        Self::new(discover_domains()?, rate_hz)
    }

    pub fn counters(&self) -> &[DomainCounter] {
        &self.counters
    }

    pub fn is_time_only(&self) -> bool {
        self.counters.is_empty()
    }

    /// Runs `workload` while a sampler thread reads every counter once per
    /// period, plus once before the workload starts and once after it ends.
    pub fn measure<R>(&self, workload: impl FnOnce() -> R) -> (R, Measurement) {
        if self.is_time_only() {
            let t0 = Instant::now();
            let out = workload();
            let wall_seconds = t0.elapsed().as_secs_f64();
            return (
                out,
                Measurement {
                    wall_seconds,
                    ..Default::default()
                },
            );
        }

        let start = Instant::now();
        let mut buffer = SampleBuffer::new(&self.counters, start);
        buffer.take();
        let period = self.period;
        let (stop_tx, stop_rx) = mpsc::channel::<()>();

        thread::scope(|s| {
            let sampler = s.spawn(move || {
                let mut next_tick = start + period;
                loop {
                    let wait = next_tick.saturating_duration_since(Instant::now());
                    match stop_rx.recv_timeout(wait) {
                        Err(RecvTimeoutError::Timeout) => {
                            buffer.take();
                            next_tick += period;
                        }
                        _ => {
                            buffer.take();
                            return buffer;
                        }
                    }
                }
            });

            let t0 = Instant::now();
            let out = workload();
            let wall_seconds = t0.elapsed().as_secs_f64();
            drop(stop_tx);
            let buffer = sampler.join().expect("energy sampler panicked");
            (
                out,
                Measurement {
                    series: buffer.series,
                    wall_seconds,
                    warnings: buffer.warnings,
                },
            )
        })
    }
}

// ---------------------------------------------------------------------------
// Power logs and integration

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub t: f64,
    pub watts: f64,
}

/// Average power over each sampling interval, stamped at the interval midpoint.
pub fn power_log(series: &DomainSeries) -> Vec<PowerPoint> {
    series
        .samples
        .windows(2)
        .filter_map(|w| {
            let dt = w[1].t - w[0].t;
            (dt > 0.0).then(|| PowerPoint {
                t: 0.5 * (w[0].t + w[1].t),
                watts: counter_delta(w[0].cumulative_j, w[1].cumulative_j, series.max_range_j) / dt,
            })
        })
        .collect()
}

/// Trapezoidal integral of a power log, in joules.
pub fn integrate(points: &[PowerPoint]) -> Result<f64, EnergyError> {
    if points.len() < 2 {
        return Err(EnergyError::TooFewPoints(points.len()));
    }
    Ok(points
        .windows(2)
        .map(|w| 0.5 * (w[0].watts + w[1].watts) * (w[1].t - w[0].t))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainEnergy {
    pub domain: RaplDomain,
    /// Trapezoid-integrated power log.
    pub joules: f64,
    /// Sum of raw counter deltas.
    pub joules_direct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EnergyReport {
    pub domains: Vec<DomainEnergy>,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

fn integrate_series(series: &DomainSeries) -> Option<DomainEnergy> {
    let log = power_log(series);
    let (first, last) = (series.samples.first()?, series.samples.last()?);
    let (head, tail) = (log.first()?, log.last()?);
    // hold the boundary powers out to the first and last sample so the
    // integral spans the whole measured window
    let mut padded = Vec::with_capacity(log.len() + 2);
    padded.push(PowerPoint {
        t: first.t,
        watts: head.watts,
    });
    padded.extend_from_slice(&log);
    padded.push(PowerPoint {
        t: last.t,
        watts: tail.watts,
    });
    let joules = integrate(&padded).ok()?;
    let joules_direct = series
        .samples
        .windows(2)
        .map(|w| counter_delta(w[0].cumulative_j, w[1].cumulative_j, series.max_range_j))
        .sum();
    Some(DomainEnergy {
        domain: series.domain,
        joules,
        joules_direct,
    })
}

impl EnergyReport {
    pub fn from_measurement(m: &Measurement) -> Self {
        let mut warnings = m.warnings.clone();
        let domains = m
            .series
            .iter()
            .filter_map(|s| {
                let energy = integrate_series(s);
                if energy.is_none() {
                    warnings.push(format!(
                        "{} socket {}: fewer than 2 usable samples",
                        s.domain.kind.label(),
                        s.domain.socket
                    ));
                }
                energy
            })
            .collect();
        Self {
            domains,
            wall_seconds: m.wall_seconds,
            warnings,
        }
    }

    /// Integrated joules of `kind` summed over sockets, `None` if not measured.
    pub fn total(&self, kind: DomainKind) -> Option<f64> {
        let mut parts = self.domains.iter().filter(|d| d.domain.kind == kind).peekable();
        parts.peek()?;
        Some(parts.map(|d| d.joules).sum())
    }

    pub fn total_direct(&self, kind: DomainKind) -> Option<f64> {
        let mut parts = self.domains.iter().filter(|d| d.domain.kind == kind).peekable();
        parts.peek()?;
        Some(parts.map(|d| d.joules_direct).sum())
    }
}

/// Writes raw samples as `t_s,domain,socket,cumulative_j`, 9 significant digits.
pub fn write_samples_csv(m: &Measurement, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t_s,domain,socket,cumulative_j")?;
    for series in &m.series {
        for s in &series.samples {
            writeln!(
                w,
                "{},{},{},{}",
                sig(s.t, 9),
                series.domain.kind.label(),
                series.domain.socket,
                sig(s.cumulative_j, 9)
            )?;
        }
    }
    Ok(())
}

pub mod fixture {
    //! Synthetic powercap trees for running the meter without RAPL hardware.

    use std::fs;
    use std::io;
    use std::path::{Path, PathBuf};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;
    use std::thread::{self, JoinHandle};
    use std::time::{Duration, Instant};

    use super::{DomainKind, RaplDomain};

    /// A powercap-shaped directory with one zone per domain, laid out like the
    /// flat `/sys/class/powercap` view (`intel-rapl:S`, `intel-rapl:S:M`).
    #[derive(Debug, Clone)]
    pub struct PowercapFixture {
        root: PathBuf,
        zones: Vec<(RaplDomain, PathBuf)>,
    }

    fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, contents)?;
        fs::rename(tmp, path)
    }

    impl PowercapFixture {
        /// Creates zones for every domain in `domains` under `root`.
        pub fn create(root: impl Into<PathBuf>, domains: &[RaplDomain], max_range_uj: u64) -> io::Result<Self> {
            let root = root.into();
            let mut zones = Vec::new();
            for d in domains {
                let (dir, name) = match d.kind {
                    DomainKind::Package => (format!("intel-rapl:{}", d.socket), format!("package-{}", d.socket)),
                    DomainKind::PowerPlane0 => (format!("intel-rapl:{}:0", d.socket), "core".to_owned()),
                    DomainKind::Dram => (format!("intel-rapl:{}:1", d.socket), "dram".to_owned()),
                };
                let dir = root.join(dir);
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("name"), format!("{name}\n"))?;
                fs::write(dir.join("max_energy_range_uj"), format!("{max_range_uj}\n"))?;
                write_atomic(&dir.join("energy_uj"), "0\n")?;
                zones.push((*d, dir));
            }
            Ok(Self { root, zones })
        }

        pub fn root(&self) -> &Path {
            &self.root
        }

        pub fn set_energy_uj(&self, domain: RaplDomain, uj: u64) -> io::Result<()> {
            let (_, dir) = self
                .zones
                .iter()
                .find(|(d, _)| *d == domain)
                .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "domain not in fixture"))?;
            write_atomic(&dir.join("energy_uj"), &format!("{uj}\n"))
        }

        /// Advances every counter at a constant power (watts per domain) from
        /// a background thread until the returned driver is dropped. Counters
        /// wrap at `max_range_uj`.
        pub fn drive(&self, watts: Vec<(RaplDomain, f64)>, max_range_uj: u64, tick: Duration) -> FixtureDriver {
            let fixture = self.clone();
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            let handle = thread::spawn(move || {
                let start = Instant::now();
                while !flag.load(Ordering::Relaxed) {
                    let t = start.elapsed().as_secs_f64();
                    for (domain, w) in &watts {
                        let uj = (w * t * 1e6) as u64 % max_range_uj;
                        let _ = fixture.set_energy_uj(*domain, uj);
                    }
                    thread::sleep(tick);
                }
            });
            FixtureDriver {
                stop,
                handle: Some(handle),
            }
        }
    }

    pub struct FixtureDriver {
        stop: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl Drop for FixtureDriver {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::Relaxed);
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixture::PowercapFixture;
    use super::*;

    fn pts(data: &[(f64, f64)]) -> Vec<PowerPoint> {
        data.iter().map(|&(t, watts)| PowerPoint { t, watts }).collect()
    }

    fn dom(socket: u32, kind: DomainKind) -> RaplDomain {
        RaplDomain { socket, kind }
    }

    #[test]
    fn counter_delta_cases() {
        assert_eq!(counter_delta(10.0, 30.0, 1000.0), 20.0);
        assert_eq!(counter_delta(990.0, 10.0, 1000.0), 20.0);
        assert_eq!(counter_delta(42.0, 42.0, 1000.0), 0.0);
    }

    #[test]
    fn integrate_constant_and_ramp() {
        let constant: Vec<_> = (0..=10).map(|i| (f64::from(i) / 10.0, 10.0)).collect();
        assert_eq!(integrate(&pts(&constant)).unwrap(), 10.0);
        assert_eq!(integrate(&pts(&[(0.0, 0.0), (1.0, 10.0)])).unwrap(), 5.0);
        let ramp: Vec<_> = (0..=4)
            .map(|i| (f64::from(i) / 4.0, 10.0 * f64::from(i) / 4.0))
            .collect();
        assert_eq!(integrate(&pts(&ramp)).unwrap(), 5.0);
    }

    #[test]
    fn integrate_sinusoid() {
        let points: Vec<_> = (0..1000)
            .map(|i| {
                let t = f64::from(i) / 999.0;
                (t, 5.0 + 5.0 * (2.0 * std::f64::consts::PI * t).sin())
            })
            .collect();
        let j = integrate(&pts(&points)).unwrap();
        assert!((j - 5.0).abs() / 5.0 < 1e-4, "{j}");
    }

    #[test]
    fn integrate_needs_two_points() {
        assert!(matches!(integrate(&[]), Err(EnergyError::TooFewPoints(0))));
        assert!(matches!(
            integrate(&pts(&[(0.0, 1.0)])),
            Err(EnergyError::TooFewPoints(1))
        ));
    }

    #[test]
    fn power_log_uses_midpoints_and_wraps() {
        let series = DomainSeries {
            domain: dom(0, DomainKind::Package),
            max_range_j: 100.0,
            samples: vec![
                EnergySample {
                    t: 0.0,
                    cumulative_j: 90.0,
                },
                EnergySample {
                    t: 1.0,
                    cumulative_j: 98.0,
                },
                EnergySample {
                    t: 2.0,
                    cumulative_j: 4.0,
                },
            ],
        };
        let log = power_log(&series);
        assert_eq!(log, pts(&[(0.5, 8.0), (1.5, 6.0)]));
        let report = EnergyReport::from_measurement(&Measurement {
            series: vec![series],
            wall_seconds: 2.0,
            warnings: vec![],
        });
        let d = report.domains[0];
        assert_eq!(d.joules_direct, 14.0);
        // 0.5 s at 8 W, trapezoid 8→6 over 1 s, 0.5 s at 6 W
        assert_eq!(d.joules, 4.0 + 7.0 + 3.0);
    }

    #[test]
    fn report_totals_sum_sockets() {
        let series = |socket, kind, end| DomainSeries {
            domain: dom(socket, kind),
            max_range_j: 1e6,
            samples: vec![
                EnergySample {
                    t: 0.0,
                    cumulative_j: 0.0,
                },
                EnergySample {
                    t: 1.0,
                    cumulative_j: end,
                },
            ],
        };
        let report = EnergyReport::from_measurement(&Measurement {
            series: vec![
                series(0, DomainKind::Package, 10.0),
                series(1, DomainKind::Package, 20.0),
                series(0, DomainKind::Dram, 3.0),
            ],
            wall_seconds: 1.0,
            warnings: vec![],
        });
        assert_eq!(report.total(DomainKind::Package), Some(30.0));
        assert_eq!(report.total(DomainKind::Dram), Some(3.0));
        assert_eq!(report.total(DomainKind::PowerPlane0), None);
    }

    #[test]
    fn discovery_on_fixture() {
        let dir = tempfile::tempdir().unwrap();
        PowercapFixture::create(
            dir.path(),
            &[dom(0, DomainKind::Package), dom(0, DomainKind::Dram)],
            1 << 32,
        )
        .unwrap();
        let found = discover_domains_at(dir.path()).unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].domain, dom(0, DomainKind::Package));
        assert_eq!(found[1].domain, dom(0, DomainKind::Dram));
        assert_eq!(found[0].max_range_j, (1u64 << 32) as f64 / 1e6);
    }

    #[test]
    fn discovery_dual_socket_and_nested() {
        let dir = tempfile::tempdir().unwrap();
        let domains: Vec<_> = [0, 1]
            .into_iter()
            .flat_map(|s| DomainKind::ALL.map(|k| dom(s, k)))
            .collect();
        PowercapFixture::create(dir.path(), &domains, 1 << 32).unwrap();
        // sysfs also nests sub-zones inside their package; duplicates are ignored
        let nested = dir.path().join("intel-rapl:1").join("intel-rapl:1:0");
        fs::create_dir_all(&nested).unwrap();
        fs::write(nested.join("name"), "core\n").unwrap();
        fs::write(nested.join("energy_uj"), "5\n").unwrap();
        fs::write(nested.join("max_energy_range_uj"), "100\n").unwrap();

        let found = discover_domains_at(dir.path()).unwrap();
        let packages = found.iter().filter(|c| c.domain.kind == DomainKind::Package).count();
        assert_eq!(packages, 2);
        assert_eq!(found.len(), 6);
    }

    #[test]
    fn discovery_missing_root_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(discover_domains_at(&dir.path().join("nope")).unwrap().is_empty());
        // unrelated zones (e.g. psys) are skipped
        let psys = dir.path().join("intel-rapl:1");
        fs::create_dir_all(&psys).unwrap();
        fs::write(psys.join("name"), "psys\n").unwrap();
        assert!(discover_domains_at(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn malformed_counter_reported() {
        let dir = tempfile::tempdir().unwrap();
        let fx = PowercapFixture::create(dir.path(), &[dom(0, DomainKind::Package)], 1000).unwrap();
        fs::write(fx.root().join("intel-rapl:0/energy_uj"), "garbage").unwrap();
        assert!(matches!(
            discover_domains_at(dir.path()),
            Err(EnergyError::Malformed { .. })
        ));
    }

    #[test]
    fn rate_bounds() {
        assert!(EnergyMeter::new(vec![], 0.5).is_err());
        assert!(EnergyMeter::new(vec![], 2000.0).is_err());
        assert!(EnergyMeter::new(vec![], 10.0).is_ok());
    }

    #[test]
    fn time_only_measure() {
        let (v, m) = EnergyMeter::time_only().measure(|| 7);
        assert_eq!(v, 7);
        assert!(m.series.is_empty());
        assert!(m.wall_seconds >= 0.0);
    }

    #[test]
    fn zero_length_workload_has_start_and_end() {
        let dir = tempfile::tempdir().unwrap();
        PowercapFixture::create(dir.path(), &[dom(0, DomainKind::Package)], 1000).unwrap();
        let meter = EnergyMeter::new(discover_domains_at(dir.path()).unwrap(), 10.0).unwrap();
        let ((), m) = meter.measure(|| ());
        assert!(m.series[0].samples.len() >= 2);
        assert!(m.series[0].samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn sampling_rate_respected() {
        let dir = tempfile::tempdir().unwrap();
        PowercapFixture::create(dir.path(), &[dom(0, DomainKind::Package)], 1000).unwrap();
        let meter = EnergyMeter::new(discover_domains_at(dir.path()).unwrap(), 50.0).unwrap();
        let ((), m) = meter.measure(|| thread::sleep(Duration::from_millis(400)));
        let n = m.series[0].samples.len();
        // 20 ticks in 0.4 s, plus the start and end samples
        assert!((20..=23).contains(&n), "{n} samples");
    }

    #[test]
    fn scripted_fixture_energy() {
        let dir = tempfile::tempdir().unwrap();
        let pkg = dom(0, DomainKind::Package);
        let max = 1u64 << 40;
        let fx = PowercapFixture::create(dir.path(), &[pkg], max).unwrap();
        let _driver = fx.drive(vec![(pkg, 25.0)], max, Duration::from_micros(200));
        let meter = EnergyMeter::new(discover_domains_at(dir.path()).unwrap(), 20.0).unwrap();
        let ((), m) = meter.measure(|| thread::sleep(Duration::from_millis(500)));
        let report = EnergyReport::from_measurement(&m);
        let d = report.domains[0];
        assert!((d.joules - d.joules_direct).abs() / d.joules_direct <= 0.05);
        let expected = 25.0 * m.wall_seconds;
        assert!(
            (d.joules - expected).abs() / expected <= 0.05,
            "{} vs {expected}",
            d.joules
        );
    }

    #[test]
    fn samples_csv_format() {
        let m = Measurement {
            series: vec![DomainSeries {
                domain: dom(1, DomainKind::Dram),
                max_range_j: 10.0,
                samples: vec![EnergySample {
                    t: 0.1,
                    cumulative_j: 1.234567891234,
                }],
            }],
            wall_seconds: 0.0,
            warnings: vec![],
        };
        let mut out = Vec::new();
        write_samples_csv(&m, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "t_s,domain,socket,cumulative_j\n0.100000000,dram,1,1.23456789\n"
        );
    }
}
