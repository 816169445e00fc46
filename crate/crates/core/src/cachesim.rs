//! Memory-access traces of the naive matmul and a trace-driven, set-associative
//! LRU cache hierarchy to replay them through.
//!
//! The model follows cachegrind's: every level is write-back/write-allocate
//! with LRU replacement, a miss at level `k` becomes an access at level `k+1`,
//! and addresses are used as-is (no paging). Dirty evictions are not charged.

use std::collections::HashSet;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CurveOrder, LayoutKind};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("invalid cache configuration: {0}")]
    InvalidConfig(String),
    #[error("row range {start}..{end} outside a matrix with {side} rows")]
    RowRange { start: u32, end: u32, side: u64 },
    #[error("trace base address {0:#x} is not 64-byte aligned")]
    Unaligned(u64),
    #[error("bad hierarchy JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AccessRecord {
    pub address: u64,
    pub kind: AccessKind,
}

impl AccessRecord {
    pub fn read(address: u64) -> Self {
        Self {
            address,
            kind: AccessKind::Read,
        }
    }

    pub fn write(address: u64) -> Self {
        Self {
            address,
            kind: AccessKind::Write,
        }
    }
}

// ---------------------------------------------------------------------------
// Trace generation

/// How the accumulator `C(y,x)` shows up in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CAccess {
    /// Accumulated in a register: one read before and one write after the `k` loop.
    #[default]
    InRegister,
    /// One write of `C(y,x)` on every `k` step, as unoptimized code stores it.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    pub c_access: CAccess,
    /// Start of the A region; B and C follow contiguously. Must be 64-byte aligned.
    pub base: u64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            c_access: CAccess::InRegister,
            base: 0,
        }
    }
}

/// Base addresses of the A, B and C regions of an order-`n` problem.
pub fn region_bases(order: CurveOrder, base: u64) -> [u64; 3] {
    let region = (order.cells() * 8).next_multiple_of(64);
    [base, base + region, base + 2 * region]
}

/// The `count` rows around the middle of the output matrix, clamped to the matrix.
pub fn middle_rows(order: CurveOrder, count: u32) -> Range<u32> {
    let side = order.side() as u32;
    let count = count.min(side);
    let start = (side / 2).saturating_sub(count / 2).min(side - count);
    start..start + count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    LoadC,
    ReadA,
    ReadB,
    StoreC,
}

/// Streaming trace of `C = A·B` restricted to output rows in a range, in the
/// exact `i-j-k` execution order.
#[derive(Debug, Clone)]
pub struct MatmulTrace {
    layout: LayoutKind,
    bits: u32,
    side: u32,
    c_access: CAccess,
    bases: [u64; 3],
    rows_end: u32,
    y: u32,
    x: u32,
    k: u32,
    phase: Phase,
}

impl MatmulTrace {
    #[inline]
    fn addr(&self, region: usize, y: u32, x: u32) -> u64 {
        let index = match self.layout {
            LayoutKind::RowMajor => codec::rowmajor_raw(y, x, self.bits),
            LayoutKind::Morton => codec::morton_raw(y, x),
            LayoutKind::Hilbert => codec::hilbert_raw(y, x, self.bits),
        };
        self.bases[region] + 8 * index
    }

    fn first_phase(c_access: CAccess) -> Phase {
        match c_access {
            CAccess::InRegister => Phase::LoadC,
            CAccess::PerStep => Phase::ReadA,
        }
    }

    fn next_cell(&mut self) {
        self.k = 0;
        self.phase = Self::first_phase(self.c_access);
        self.x += 1;
        if self.x == self.side {
            self.x = 0;
            self.y += 1;
        }
    }

    fn next_k(&mut self) {
        self.k += 1;
        if self.k < self.side {
            self.phase = Phase::ReadA;
        } else if self.c_access == CAccess::InRegister {
            self.phase = Phase::StoreC;
        } else {
            self.next_cell();
        }
    }

    /// Records still to be produced.
    pub fn remaining(&self) -> u64 {
        if self.y >= self.rows_end {
            return 0;
        }
        let side = u64::from(self.side);
        let per_cell = match self.c_access {
            CAccess::InRegister => 2 * side + 2,
            CAccess::PerStep => 3 * side,
        };
        let done_in_cell = match (self.c_access, self.phase) {
            (CAccess::InRegister, Phase::LoadC) => 0,
            (CAccess::InRegister, Phase::ReadA) => 1 + 2 * u64::from(self.k),
            (CAccess::InRegister, Phase::ReadB) => 2 + 2 * u64::from(self.k),
            (CAccess::InRegister, Phase::StoreC) => 1 + 2 * side,
            (CAccess::PerStep, Phase::ReadA) => 3 * u64::from(self.k),
            (CAccess::PerStep, Phase::ReadB) => 1 + 3 * u64::from(self.k),
            (CAccess::PerStep, Phase::StoreC) => 2 + 3 * u64::from(self.k),
            (CAccess::PerStep, Phase::LoadC) => unreachable!(),
        };
        let cells_left = u64::from(self.rows_end - self.y) * side - u64::from(self.x);
        cells_left * per_cell - done_in_cell
    }
}

impl Iterator for MatmulTrace {
    type Item = AccessRecord;

    fn next(&mut self) -> Option<AccessRecord> {
        if self.y >= self.rows_end {
            return None;
        }
        let (y, x, k) = (self.y, self.x, self.k);
        let record = match self.phase {
            Phase::LoadC => {
                self.phase = Phase::ReadA;
                AccessRecord::read(self.addr(2, y, x))
            }
            Phase::ReadA => {
                self.phase = Phase::ReadB;
                AccessRecord::read(self.addr(0, y, k))
            }
            Phase::ReadB => {
                match self.c_access {
                    CAccess::InRegister => self.next_k(),
                    CAccess::PerStep => self.phase = Phase::StoreC,
                }
                AccessRecord::read(self.addr(1, k, x))
            }
            Phase::StoreC => {
                match self.c_access {
                    CAccess::InRegister => self.next_cell(),
                    CAccess::PerStep => self.next_k(),
                }
                AccessRecord::write(self.addr(2, y, x))
            }
        };
        Some(record)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining()).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

/// Trace of the matmul loop nest for output rows in `rows`.
pub fn matmul_trace(
    order: CurveOrder,
    layout: LayoutKind,
    rows: Range<u32>,
    opts: TraceOptions,
) -> Result<MatmulTrace, CacheError> {
    let side = order.side();
    if rows.start > rows.end || u64::from(rows.end) > side {
        return Err(CacheError::RowRange {
            start: rows.start,
            end: rows.end,
            side,
        });
    }
    if !opts.base.is_multiple_of(64) {
        return Err(CacheError::Unaligned(opts.base));
    }
    Ok(MatmulTrace {
        layout,
        bits: order.bits(),
        side: side as u32,
        c_access: opts.c_access,
        bases: region_bases(order, opts.base),
        rows_end: rows.end,
        y: rows.start,
        x: 0,
        k: 0,
        phase: MatmulTrace::first_phase(opts.c_access),
    })
}

// ---------------------------------------------------------------------------
// Trace files: 1 byte kind (0 read, 1 write) + 8 byte little-endian address.

pub const TRACE_RECORD_BYTES: usize = 9;

pub fn write_trace(records: impl IntoIterator<Item = AccessRecord>, w: impl Write) -> io::Result<u64> {
    let mut w = BufWriter::new(w);
    let mut count = 0;
    for r in records {
        let mut buf = [0u8; TRACE_RECORD_BYTES];
        buf[0] = match r.kind {
            AccessKind::Read => 0,
            AccessKind::Write => 1,
        };
        buf[1..].copy_from_slice(&r.address.to_le_bytes());
        w.write_all(&buf)?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

pub struct TraceReader<R: Read> {
    inner: BufReader<R>,
}

pub fn read_trace<R: Read>(r: R) -> TraceReader<R> {
    TraceReader {
        inner: BufReader::new(r),
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = io::Result<AccessRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = [0u8; TRACE_RECORD_BYTES];
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) if filled == 0 => return None,
                Ok(0) => {
                    return Some(Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        "truncated trace record",
                    )))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Some(Err(e)),
            }
        }
        let kind = match buf[0] {
            0 => AccessKind::Read,
            1 => AccessKind::Write,
            b => {
                return Some(Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("bad record kind {b}"),
                )))
            }
        };
        let address = u64::from_le_bytes(buf[1..].try_into().unwrap());
        Some(Ok(AccessRecord { address, kind }))
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLevelConfig {
    pub line_bytes: u64,
    pub sets: u64,
    pub associativity: u64,
}

impl CacheLevelConfig {
    pub const fn new(line_bytes: u64, sets: u64, associativity: u64) -> Self {
        Self {
            line_bytes,
            sets,
            associativity,
        }
    }

    /// Level of `capacity` bytes; `capacity / (line · ways)` must be a power of two.
    pub fn with_capacity(capacity: u64, associativity: u64, line_bytes: u64) -> Self {
        Self::new(line_bytes, capacity / (associativity * line_bytes), associativity)
    }

    pub fn capacity(&self) -> u64 {
        self.line_bytes * self.sets * self.associativity
    }

    fn validate(&self) -> Result<(), CacheError> {
        let bad = |what: String| Err(CacheError::InvalidConfig(what));
        if !self.line_bytes.is_power_of_two() || self.line_bytes < 8 {
            return bad(format!("line_bytes {} must be a power of two >= 8", self.line_bytes));
        }
        if !self.sets.is_power_of_two() {
            return bad(format!("sets {} must be a power of two", self.sets));
        }
        if self.associativity == 0 {
            return bad("associativity must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyRepr")]
pub struct HierarchyConfig {
    pub levels: Vec<CacheLevelConfig>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HierarchyRepr {
    Wrapped { levels: Vec<CacheLevelConfig> },
    Bare(Vec<CacheLevelConfig>),
}

impl TryFrom<HierarchyRepr> for HierarchyConfig {
    type Error = CacheError;

    fn try_from(repr: HierarchyRepr) -> Result<Self, CacheError> {
        let (HierarchyRepr::Wrapped { levels } | HierarchyRepr::Bare(levels)) = repr;
        Self::new(levels)
    }
}

const KIB: u64 = 1024;
const MIB: u64 = 1024 * KIB;

impl HierarchyConfig {
    pub fn new(levels: Vec<CacheLevelConfig>) -> Result<Self, CacheError> {
        if levels.is_empty() {
            return Err(CacheError::InvalidConfig("hierarchy needs at least one level".into()));
        }
        for level in &levels {
            level.validate()?;
        }
        if levels.windows(2).any(|w| w[1].line_bytes < w[0].line_bytes) {
            return Err(CacheError::InvalidConfig(
                "line size must not shrink towards memory".into(),
            ));
        }
        Ok(Self { levels })
    }

    /// Xeon E5-2670: 32 KiB 8-way L1d, 256 KiB 8-way L2, 20 MiB 20-way L3, 64 B lines.
    pub fn e5_2670() -> Self {
        Self {
            levels: vec![
                CacheLevelConfig::with_capacity(32 * KIB, 8, 64),
                CacheLevelConfig::with_capacity(256 * KIB, 8, 64),
                CacheLevelConfig::with_capacity(20 * MIB, 20, 64),
            ],
        }
    }

    /// Shrunk hierarchy for desk-sized problems: the E5-2670 L1d in front of a
    /// 256 KiB 16-way last level.
    pub fn desk_scale() -> Self {
        Self {
            levels: vec![
                CacheLevelConfig::with_capacity(32 * KIB, 8, 64),
                CacheLevelConfig::with_capacity(256 * KIB, 16, 64),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CacheError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hierarchy serializes")
    }

    pub fn last_level(&self) -> &CacheLevelConfig {
        self.levels.last().expect("non-empty hierarchy")
    }
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self::e5_2670()
    }
}

// ---------------------------------------------------------------------------
// Simulation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LevelStats {
    pub reads: u64,
    pub read_misses: u64,
    pub writes: u64,
    pub write_misses: u64,
    /// Misses on lines this level had never held before.
    pub compulsory_misses: u64,
}

impl LevelStats {
    pub fn accesses(&self) -> u64 {
        self.reads + self.writes
    }

    pub fn misses(&self) -> u64 {
        self.read_misses + self.write_misses
    }

    pub fn hits(&self) -> u64 {
        self.accesses() - self.misses()
    }

    pub fn read_hits(&self) -> u64 {
        self.reads - self.read_misses
    }

    pub fn write_hits(&self) -> u64 {
        self.writes - self.write_misses
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SimStats {
    pub levels: Vec<LevelStats>,
}

impl SimStats {
    pub fn last_level(&self) -> &LevelStats {
        self.levels.last().expect("non-empty hierarchy")
    }
}

struct CacheLevel {
    line_shift: u32,
    set_mask: u64,
    ways: usize,
    /// `(line, last use)` per way, `sets * ways` entries; a zero stamp is empty.
    slots: Vec<(u64, u64)>,
    clock: u64,
    seen: HashSet<u64>,
}

impl CacheLevel {
    fn new(cfg: &CacheLevelConfig) -> Self {
        let ways = cfg.associativity as usize;
        Self {
            line_shift: cfg.line_bytes.trailing_zeros(),
            set_mask: cfg.sets - 1,
            ways,
            slots: vec![(0, 0); cfg.sets as usize * ways],
            clock: 0,
            seen: HashSet::new(),
        }
    }

    /// Returns `(hit, compulsory)` and updates LRU state, allocating on miss.
    fn access(&mut self, address: u64) -> (bool, bool) {
        self.clock += 1;
        let line = address >> self.line_shift;
        let set = (line & self.set_mask) as usize;
        let slots = &mut self.slots[set * self.ways..(set + 1) * self.ways];
        if let Some(slot) = slots.iter_mut().find(|s| s.1 != 0 && s.0 == line) {
            slot.1 = self.clock;
            return (true, false);
        }
        let victim = slots.iter_mut().min_by_key(|s| s.1).expect("associativity >= 1");
        *victim = (line, self.clock);
        (false, self.seen.insert(line))
    }
}

/// Incremental hierarchy simulator.
pub struct Simulator {
    levels: Vec<CacheLevel>,
    stats: SimStats,
}

impl Simulator {
    pub fn new(cfg: &HierarchyConfig) -> Self {
        Self {
            levels: cfg.levels.iter().map(CacheLevel::new).collect(),
            stats: SimStats {
                levels: vec![LevelStats::default(); cfg.levels.len()],
            },
        }
    }

    pub fn access(&mut self, record: AccessRecord) {
        for (level, stats) in self.levels.iter_mut().zip(&mut self.stats.levels) {
            let (hit, compulsory) = level.access(record.address);
            match record.kind {
                AccessKind::Read => {
                    stats.reads += 1;
                    stats.read_misses += u64::from(!hit);
                }
                AccessKind::Write => {
                    stats.writes += 1;
                    stats.write_misses += u64::from(!hit);
                }
            }
            stats.compulsory_misses += u64::from(compulsory);
            if hit {
                break;
            }
        }
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn into_stats(self) -> SimStats {
        self.stats
    }
}

pub fn simulate(trace: impl IntoIterator<Item = AccessRecord>, cfg: &HierarchyConfig) -> SimStats {
    let mut sim = Simulator::new(cfg);
    for record in trace {
        sim.access(record);
    }
    sim.into_stats()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutStats {
    pub layout: LayoutKind,
    pub stats: SimStats,
}

/// Traces and simulates the same row range under each layout, one thread per layout.
pub fn compare_layouts(
    order: CurveOrder,
    layouts: &[LayoutKind],
    cfg: &HierarchyConfig,
    rows: Range<u32>,
    opts: TraceOptions,
) -> Result<Vec<LayoutStats>, CacheError> {
    let traces = layouts
        .iter()
        .map(|&layout| matmul_trace(order, layout, rows.clone(), opts).map(|t| (layout, t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(thread::scope(|s| {
        let handles: Vec<_> = traces
            .into_iter()
            .map(|(layout, trace)| {
                s.spawn(move || LayoutStats {
                    layout,
                    stats: simulate(trace, cfg),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread"))
            .collect()
    }))
}
