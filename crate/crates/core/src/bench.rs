//! Benchmark grid runner and its CSV schema.
//!
//! A run multiplies seeded random matrices for every combination of layout,
//! size and worker count, optionally under the energy meter, and emits one row
//! per repetition followed by one median row per configuration.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{CodecError, CurveOrder, LayoutKind};
use crate::energy::{self, DomainKind, EnergyMeter, EnergyReport};
use crate::fmt::median;
use crate::matrix::{matmul, MatrixError, MatrixF64};

pub const BENCH_CSV_HEADER: &str = "layout,n,workers,rep,seed,wall_s,pkg_j,pp0_j,dram_j,checksum,governor,freq_khz";

/// `rep` value of the per-configuration summary rows.
pub const MEDIAN_REP: &str = "median";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("energy measurement required but unavailable: {0}")]
    EnergyUnavailable(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error("bench CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("config file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sizes: Vec<u32>,
    pub layouts: Vec<LayoutKind>,
    pub workers: Vec<usize>,
    pub repetitions: u32,
    pub warmup: u32,
    pub seed: u64,
    pub energy: bool,
    /// Fail instead of falling back to time-only mode.
    pub require_energy: bool,
    pub rate_hz: f64,
    /// Zero timing and energy columns and blank the host frequency snapshot,
    /// making the CSV a pure function of the inputs.
    pub no_timing: bool,
}

/// Sorted, deduplicated layouts, sizes and worker counts.
type Grid = (Vec<LayoutKind>, Vec<CurveOrder>, Vec<usize>);

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sizes: vec![6, 8, 10],
            layouts: LayoutKind::ALL.to_vec(),
            workers: vec![1, 2, 4, 8],
            repetitions: 3,
            warmup: 1,
            seed: 42,
            energy: false,
            require_energy: false,
            rate_hz: energy::DEFAULT_RATE_HZ,
            no_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks ranges and returns the sorted, de-duplicated grid axes.
    fn grid(&self) -> Result<Grid, BenchError> {
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be >= 1".into()));
        }
        if self.sizes.is_empty() || self.layouts.is_empty() || self.workers.is_empty() {
            return Err(BenchError::Config(
                "sizes, layouts and workers must be non-empty".into(),
            ));
        }
        if self.workers.contains(&0) {
            return Err(BenchError::Config("worker counts must be >= 1".into()));
        }
        let mut layouts = self.layouts.clone();
        layouts.sort();
        layouts.dedup();
        let mut sizes = self
            .sizes
            .iter()
            .map(|&n| CurveOrder::new(n))
            .collect::<Result<Vec<_>, _>>()?;
        sizes.sort();
        sizes.dedup();
        let mut workers = self.workers.clone();
        workers.sort();
        workers.dedup();
        Ok((layouts, sizes, workers))
    }
}

/// One line of the bench CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub layout: LayoutKind,
    pub n: u32,
    pub workers: usize,
    /// Repetition number, or [`MEDIAN_REP`] for summary rows.
    pub rep: String,
    pub seed: u64,
    pub wall_s: f64,
    pub pkg_j: Option<f64>,
    pub pp0_j: Option<f64>,
    pub dram_j: Option<f64>,
    /// Digest of C in row-major order; equal across layouts for equal inputs.
    pub checksum: String,
    pub governor: String,
    pub freq_khz: Option<u64>,
}

impl ResultRow {
    pub fn is_summary(&self) -> bool {
        self.rep == MEDIAN_REP
    }

    pub fn energy(&self, kind: DomainKind) -> Option<f64> {
        match kind {
            DomainKind::Package => self.pkg_j,
            DomainKind::PowerPlane0 => self.pp0_j,
            DomainKind::Dram => self.dram_j,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchOutput {
    /// Measurement rows followed by median rows.
    pub rows: Vec<ResultRow>,
    pub warnings: Vec<String>,
}

/// Read-only snapshot of the cpufreq governor and current frequency of cpu0.
pub fn cpufreq_snapshot() -> (String, Option<u64>) {
    let base = Path::new("/sys/devices/system/cpu/cpu0/cpufreq");
    let governor = fs::read_to_string(base.join("scaling_governor"))
        .map(|s| s.trim().to_owned())
        .unwrap_or_default();
    let freq = fs::read_to_string(base.join("scaling_cur_freq"))
        .ok()
        .and_then(|s| s.trim().parse().ok());
    (governor, freq)
}

/// Truncated SHA-256 of the row-major element bits.
pub fn checksum(m: &MatrixF64) -> String {
    let mut hasher = Sha256::new();
    for v in m.to_row_major_vec() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Input pair for order `n`: both matrices drawn from one stream seeded by `seed` and `n`.
pub fn input_pair(order: CurveOrder, seed: u64) -> Result<(MatrixF64, MatrixF64), MatrixError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(order.bits()) << 56));
    let a = MatrixF64::random(order, LayoutKind::RowMajor, &mut rng)?;
    let b = MatrixF64::random(order, LayoutKind::RowMajor, &mut rng)?;
    Ok((a, b))
}

/// Chooses the meter for `cfg`: discovered counters, or time-only with a warning.
pub fn meter_for(cfg: &ExperimentConfig, warnings: &mut Vec<String>) -> Result<EnergyMeter, BenchError> {
    if !cfg.energy {
        return Ok(EnergyMeter::time_only());
    }
    let unavailable = match energy::discover_domains() {
        Ok(counters) if !counters.is_empty() => return Ok(EnergyMeter::new(counters, cfg.rate_hz)?),
        Ok(_) => format!("no RAPL domains under {}", energy::powercap_root().display()),
        Err(e) => e.to_string(),
    };
    if cfg.require_energy {
        return Err(BenchError::EnergyUnavailable(unavailable));
    }
    warnings.push(format!("energy disabled: {unavailable}; running in time-only mode"));
    Ok(EnergyMeter::time_only())
}

/// Where per-run sample CSVs go, if anywhere.
#[derive(Debug, Clone, Default)]
pub struct SampleSink {
    pub dir: Option<PathBuf>,
}

impl SampleSink {
    fn write(&self, row: &ResultRow, m: &energy::Measurement) -> io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        if m.series.is_empty() {
            return Ok(());
        }
        fs::create_dir_all(dir)?;
        let name = format!("samples_{}_n{}_w{}_r{}.csv", row.layout, row.n, row.workers, row.rep);
        let mut buf = Vec::new();
        energy::write_samples_csv(m, &mut buf)?;
        fs::write(dir.join(name), buf)
    }
}

/// Runs the full grid with `meter`.
pub fn run_bench(cfg: &ExperimentConfig, meter: &EnergyMeter, samples: &SampleSink) -> Result<BenchOutput, BenchError> {
    let (layouts, sizes, worker_counts) = cfg.grid()?;
    let mut out = BenchOutput::default();
    let inputs = sizes
        .iter()
        .map(|&order| input_pair(order, cfg.seed).map(|p| (order, p)))
        .collect::<Result<BTreeMap<_, _>, _>>()?;

    for &layout in &layouts {
        for (&order, (a, b)) in &inputs {
            let (a, b) = (a.convert(layout)?, b.convert(layout)?);
            for &workers in &worker_counts {
                for _ in 0..cfg.warmup {
                    matmul(&a, &b, workers)?;
                }
                for rep in 0..cfg.repetitions {
                    let (governor, freq_khz) = if cfg.no_timing {
                        (String::new(), None)
                    } else {
                        cpufreq_snapshot()
                    };
                    let (c, measurement) = meter.measure(|| matmul(&a, &b, workers));
                    let c = c?;
                    let report = EnergyReport::from_measurement(&measurement);
                    out.warnings.extend(report.warnings.iter().cloned());
                    let energy = |kind| report.total(kind).map(|j| if cfg.no_timing { 0.0 } else { j });
                    let row = ResultRow {
                        layout,
                        n: order.bits(),
                        workers,
                        rep: rep.to_string(),
                        seed: cfg.seed,
                        wall_s: if cfg.no_timing { 0.0 } else { measurement.wall_seconds },
                        pkg_j: energy(DomainKind::Package),
                        pp0_j: energy(DomainKind::PowerPlane0),
                        dram_j: energy(DomainKind::Dram),
                        checksum: checksum(&c),
                        governor,
                        freq_khz,
                    };
                    samples.write(&row, &measurement)?;
                    out.rows.push(row);
                }
            }
        }
    }

    let summaries = summarize(&out.rows);
    out.rows.extend(summaries);
    Ok(out)
}

type GroupKey = (LayoutKind, u32, usize);

/// One median row per `(layout, n, workers)`, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut groups: Vec<(GroupKey, Vec<&ResultRow>)> = Vec::new();
    for row in rows.iter().filter(|r| !r.is_summary()) {
        let key = (row.layout, row.n, row.workers);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|(_, members)| {
            let first = members[0];
            let walls: Vec<f64> = members.iter().map(|r| r.wall_s).collect();
            let energy = |kind: DomainKind| {
                let values: Option<Vec<f64>> = members.iter().map(|r| r.energy(kind)).collect();
                values.and_then(|v| median(&v))
            };
            ResultRow {
                rep: MEDIAN_REP.to_owned(),
                wall_s: median(&walls).unwrap_or_default(),
                pkg_j: energy(DomainKind::Package),
                pp0_j: energy(DomainKind::PowerPlane0),
                dram_j: energy(DomainKind::Dram),
                ..first.clone()
            }
        })
        .collect()
}

pub fn write_bench_csv(rows: &[ResultRow], w: impl Write) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_writer(w);
    if rows.is_empty() {
        writer.write_record(BENCH_CSV_HEADER.split(','))?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_bench_csv(r: impl Read) -> Result<Vec<ResultRow>, BenchError> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != BENCH_CSV_HEADER {
        return Err(BenchError::Config(format!(
            "unexpected bench CSV header `{}`",
            header.join(",")
        )));
    }
    Ok(reader.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            sizes: vec![3],
            workers: vec![1, 4],
            repetitions: 3,
            warmup: 0,
            no_timing: true,
            ..Default::default()
        }
    }

    #[test]
    fn default_grid() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.sizes, vec![6, 8, 10]);
        assert_eq!(cfg.workers, vec![1, 2, 4, 8]);
        assert_eq!(cfg.repetitions, 3);
        assert_eq!(cfg.warmup, 1);
        assert_eq!(cfg.rate_hz, 10.0);
        assert!(!cfg.energy);
    }

    #[test]
    fn config_validation() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut cfg = small_cfg();
            f(&mut cfg);
            cfg.grid().is_err()
        };
        assert!(bad(|c| c.repetitions = 0));
        assert!(bad(|c| c.workers = vec![0]));
        assert!(bad(|c| c.sizes = vec![40]));
        assert!(bad(|c| c.layouts.clear()));
    }

    #[test]
    fn config_json_partial() {
        let cfg = ExperimentConfig::from_json(r#"{"sizes":[4],"layouts":["morton","hilbert"],"energy":true}"#).unwrap();
        assert_eq!(cfg.sizes, vec![4]);
        assert_eq!(cfg.layouts, vec![LayoutKind::Morton, LayoutKind::Hilbert]);
        assert!(cfg.energy);
        assert_eq!(cfg.repetitions, 3);
        assert!(ExperimentConfig::from_json(r#"{"size":[4]}"#).is_err());
    }

    #[test]
    fn grid_cardinality_and_order() {
        let out = run_bench(&small_cfg(), &EnergyMeter::time_only(), &SampleSink::default()).unwrap();
        let (measured, summary): (Vec<_>, Vec<_>) = out.rows.iter().partition(|r| !r.is_summary());
        assert_eq!(measured.len(), 18);
        assert_eq!(summary.len(), 6);
        assert!(out.rows[..18].iter().all(|r| !r.is_summary()));
        let keys: Vec<_> = measured
            .iter()
            .map(|r| (r.layout, r.n, r.workers, r.rep.clone()))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn checksums_agree_across_layouts() {
        let out = run_bench(&small_cfg(), &EnergyMeter::time_only(), &SampleSink::default()).unwrap();
        let first = &out.rows[0].checksum;
        assert_eq!(first.len(), 16);
        assert!(out.rows.iter().all(|r| &r.checksum == first));
    }

    #[test]
    fn csv_roundtrip_and_header() {
        let out = run_bench(&small_cfg(), &EnergyMeter::time_only(), &SampleSink::default()).unwrap();
        let mut buf = Vec::new();
        write_bench_csv(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), BENCH_CSV_HEADER);
        assert!(text.lines().nth(1).unwrap().starts_with("rowmajor,3,1,0,42,0.0,,,,"));
        assert_eq!(read_bench_csv(buf.as_slice()).unwrap(), out.rows);

        let mut empty = Vec::new();
        write_bench_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), BENCH_CSV_HEADER);
    }

    #[test]
    fn medians_of_reps() {
        let row = |rep: &str, wall: f64, pkg: Option<f64>| ResultRow {
            layout: LayoutKind::Morton,
            n: 4,
            workers: 2,
            rep: rep.into(),
            seed: 1,
            wall_s: wall,
            pkg_j: pkg,
            pp0_j: None,
            dram_j: None,
            checksum: "x".into(),
            governor: String::new(),
            freq_khz: None,
        };
        let rows = vec![
            row("0", 3.0, Some(30.0)),
            row("1", 1.0, Some(10.0)),
            row("2", 2.0, Some(50.0)),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].wall_s, 2.0);
        assert_eq!(s[0].pkg_j, Some(30.0));
        assert_eq!(s[0].rep, MEDIAN_REP);

        let partial = vec![row("0", 1.0, Some(1.0)), row("1", 1.0, None)];
        assert_eq!(summarize(&partial)[0].pkg_j, None);
    }

    #[test]
    fn energy_fallback_and_requirement() {
        // nothing under a missing root
        std::env::set_var(energy::POWERCAP_ROOT_ENV, "/nonexistent/powercap");
        let mut warnings = Vec::new();
        let cfg = ExperimentConfig {
            energy: true,
            ..small_cfg()
        };
        assert!(meter_for(&cfg, &mut warnings).unwrap().is_time_only());
        assert_eq!(warnings.len(), 1);
        let strict = ExperimentConfig {
            require_energy: true,
            ..cfg
        };
        assert!(matches!(
            meter_for(&strict, &mut warnings),
            Err(BenchError::EnergyUnavailable(_))
        ));
        std::env::remove_var(energy::POWERCAP_ROOT_ENV);
    }
}
