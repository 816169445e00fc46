//! Post-processing of bench CSVs and simulator results into tables, plot
//! datasets and gnuplot scripts. Every output is a pure function of its input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::bench::ResultRow;
use crate::cachesim::LayoutStats;
use crate::codec::{self, CodecError, Coord2, CurveOrder, LayoutKind, LinearIndex};
use crate::energy::DomainKind;
use crate::fmt::median;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no workers=1 baseline for {layout} n={n}")]
    MissingBaseline { layout: LayoutKind, n: u32 },
    #[error("zero median wall time for {layout} n={n} workers={workers}; was the bench run with --no-timing?")]
    ZeroTime { layout: LayoutKind, n: u32, workers: usize },
    #[error("input has no measurement rows")]
    Empty,
    #[error("input has no energy data")]
    NoEnergy,
}

fn measurements(rows: &[ResultRow]) -> impl Iterator<Item = &ResultRow> {
    rows.iter().filter(|r| !r.is_summary())
}

// ---------------------------------------------------------------------------
// Speedup

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub layout: LayoutKind,
    pub n: u32,
    pub workers: usize,
    pub median_wall_s: f64,
    pub speedup: f64,
}

/// Median single-worker time over median `w`-worker time, per layout and size.
pub fn speedup_table(rows: &[ResultRow]) -> Result<Vec<SpeedupRow>, AnalysisError> {
    let mut walls: BTreeMap<(LayoutKind, u32, usize), Vec<f64>> = BTreeMap::new();
    for r in measurements(rows) {
        walls.entry((r.layout, r.n, r.workers)).or_default().push(r.wall_s);
    }
    if walls.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let medians: BTreeMap<_, _> = walls.into_iter().map(|(k, v)| (k, median(&v).unwrap())).collect();
    medians
        .iter()
        .map(|(&(layout, n, workers), &wall)| {
            let base = *medians
                .get(&(layout, n, 1))
                .ok_or(AnalysisError::MissingBaseline { layout, n })?;
            if wall == 0.0 {
                return Err(AnalysisError::ZeroTime { layout, n, workers });
            }
            Ok(SpeedupRow {
                layout,
                n,
                workers,
                median_wall_s: wall,
                speedup: base / wall,
            })
        })
        .collect()
}

pub fn render_speedup_csv(rows: &[SpeedupRow]) -> String {
    let mut out = String::from("layout,n,workers,median_wall_s,speedup\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.4}",
            r.layout, r.n, r.workers, r.median_wall_s, r.speedup
        )
        .unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Energy vs time

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPoint {
    pub wall_s: f64,
    pub joules: f64,
    pub n: u32,
    pub workers: usize,
    /// Opaque frequency label (`<khz>kHz`, governor name, or `-`).
    pub freq_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub layout: LayoutKind,
    pub domain: DomainKind,
    pub points: Vec<EnergyPoint>,
}

fn freq_label(r: &ResultRow) -> String {
    match (r.freq_khz, r.governor.as_str()) {
        (Some(khz), _) => format!("{khz}kHz"),
        (None, "") => "-".to_owned(),
        (None, g) => g.split_whitespace().collect::<Vec<_>>().join("_"),
    }
}

/// One series per `(layout, domain)`; one point per `(n, workers, frequency)`
/// holding the medians over repetitions.
pub fn energy_time(rows: &[ResultRow]) -> Result<Vec<EnergySeries>, AnalysisError> {
    if measurements(rows).next().is_none() {
        return Err(AnalysisError::Empty);
    }
    type Key = (LayoutKind, DomainKind, u32, usize, String);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in measurements(rows) {
        for domain in DomainKind::ALL {
            if let Some(j) = r.energy(domain) {
                let g = groups
                    .entry((r.layout, domain, r.n, r.workers, freq_label(r)))
                    .or_default();
                g.0.push(r.wall_s);
                g.1.push(j);
            }
        }
    }
    if groups.is_empty() {
        return Err(AnalysisError::NoEnergy);
    }
    let mut series: BTreeMap<(LayoutKind, DomainKind), Vec<EnergyPoint>> = BTreeMap::new();
    for ((layout, domain, n, workers, freq_label), (walls, joules)) in groups {
        series.entry((layout, domain)).or_default().push(EnergyPoint {
            wall_s: median(&walls).unwrap(),
            joules: median(&joules).unwrap(),
            n,
            workers,
            freq_label,
        });
    }
    Ok(series
        .into_iter()
        .map(|((layout, domain), mut points)| {
            points.sort_by(|a, b| {
                a.wall_s
                    .total_cmp(&b.wall_s)
                    .then(a.joules.total_cmp(&b.joules))
                    .then_with(|| a.freq_label.cmp(&b.freq_label))
            });
            EnergySeries { layout, domain, points }
        })
        .collect())
}

/// Gnuplot data file: one `index` block per series, separated by two blank lines.
pub fn render_energy_dat(series: &[EnergySeries]) -> String {
    let mut out = String::from("# energy vs execution time\n# columns: wall_s joules n workers freq\n");
    for (i, s) in series.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        writeln!(out, "# index {i}: layout={} domain={}", s.layout, s.domain.label()).unwrap();
        for p in &s.points {
            writeln!(
                out,
                "{:.9e} {:.9e} {} {} {}",
                p.wall_s, p.joules, p.n, p.workers, p.freq_label
            )
            .unwrap();
        }
    }
    out
}

/// Gnuplot script plotting every series of `dat_file`: dash type by domain,
/// point type by layout.
pub fn render_energy_gnuplot(series: &[EnergySeries], dat_file: &str, png_file: &str) -> String {
    let mut out = String::new();
    out.push_str("set terminal pngcairo size 1200,800 enhanced\n");
    writeln!(out, "set output '{png_file}'").unwrap();
    out.push_str("set title 'Energy vs. execution time'\n");
    out.push_str("set xlabel 'Execution time [s]'\nset ylabel 'Energy [J]'\n");
    out.push_str("set key outside right top\nset grid\n");
    let plots: Vec<String> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dash = match s.domain {
                DomainKind::Package => 1,
                DomainKind::PowerPlane0 => 2,
                DomainKind::Dram => 3,
            };
            let point = match s.layout {
                LayoutKind::RowMajor => 5,
                LayoutKind::Morton => 7,
                LayoutKind::Hilbert => 9,
            };
            format!(
                "'{dat_file}' index {i} using 1:2 with linespoints dt {dash} pt {point} title '{} {}'",
                s.layout.short(),
                s.domain.label()
            )
        })
        .collect();
    writeln!(out, "plot {}", plots.join(", \\\n     ")).unwrap();
    out
}

// ---------------------------------------------------------------------------
// Cache simulation report

/// Hilbert over Morton last-level read misses reported for the full-size cachegrind run (16.78e6 vs 17.06e6).
pub const REFERENCE_HO_MO_RATIO: f64 = 16.78 / 17.06;

/// Hilbert over Morton last-level read misses, when both were simulated.
pub fn ho_mo_ratio(results: &[LayoutStats]) -> Option<f64> {
    let ll = |kind| {
        results
            .iter()
            .find(|s| s.layout == kind)
            .map(|s| s.stats.last_level().read_misses as f64)
    };
    Some(ll(LayoutKind::Hilbert)? / ll(LayoutKind::Morton)?)
}

pub fn render_simcache(order: CurveOrder, rows: &Range<u32>, results: &[LayoutStats]) -> String {
    let mut out = String::new();
    writeln!(out, "# n={} rows={}..{}", order.bits(), rows.start, rows.end).unwrap();
    out.push_str("layout,level,reads,read_misses,writes,write_misses,compulsory_misses\n");
    for r in results {
        for (i, l) in r.stats.levels.iter().enumerate() {
            writeln!(
                out,
                "{},L{},{},{},{},{},{}",
                r.layout,
                i + 1,
                l.reads,
                l.read_misses,
                l.writes,
                l.write_misses,
                l.compulsory_misses
            )
            .unwrap();
        }
    }
    if let Some(ratio) = ho_mo_ratio(results) {
        writeln!(out, "ho_mo_ll_read_miss_ratio,{ratio:.4}").unwrap();
        writeln!(out, "reference_ratio_16.78e6/17.06e6,{REFERENCE_HO_MO_RATIO:.4}").unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Codec queries

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecQuery {
    Encode(Coord2),
    Decode(LinearIndex),
}

/// Decimal result on the first line, binary on the second.
pub fn codec_query(layout: LayoutKind, order: CurveOrder, query: CodecQuery) -> Result<String, CodecError> {
    let bits = order.bits() as usize;
    Ok(match query {
        CodecQuery::Encode(c) => {
            let i = codec::encode(layout, c, order)?.value();
            format!("{i}\n0b{i:0width$b}\n", width = 2 * bits)
        }
        CodecQuery::Decode(i) => {
            let c = codec::decode(layout, i, order)?;
            format!("({},{})\n(0b{:0bits$b},0b{:0bits$b})\n", c.y, c.x, c.y, c.x)
        }
    })
}
