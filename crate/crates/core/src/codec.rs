//! Coordinate ↔ linear-index translation for row-major, Morton and Hilbert
//! element orderings.
//!
//! All three layouts address a `2^n × 2^n` matrix. Morton and Hilbert share the
//! same quadrant decomposition: every pair of index bits selects one quarter of
//! the remaining submatrix, most significant pair first. They differ only in
//! the order the four quadrants are visited:
//!
//! ```text
//!   Morton    Hilbert
//!   0 1       0 1
//!   2 3       3 2
//! ```
//!
//! Morton is therefore nothing more than bit interleaving of `(y, x)` with `y`
//! as the major coordinate. Hilbert starts from the same interleaved word and
//! rewrites it one bit pair at a time, rotating the bits that trail each pair.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported bits-per-dimension. `4^31` still fits a `u64` with room
/// to spare, so side lengths and element counts never overflow.
pub const MAX_BITS: u32 = 31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("curve order must be in 1..={MAX_BITS}, got {0}")]
    InvalidOrder(u32),
    #[error("coordinate ({y},{x}) outside a {side}x{side} matrix")]
    CoordOutOfRange { y: u32, x: u32, side: u64 },
    #[error("index {index} outside a matrix of {cells} elements")]
    IndexOutOfRange { index: u64, cells: u64 },
    #[error("unknown layout `{0}` (expected rowmajor, morton or hilbert)")]
    UnknownLayout(String),
}

/// Bits per dimension of a square power-of-two matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct CurveOrder(u32);

impl CurveOrder {
    pub fn new(bits: u32) -> Result<Self, CodecError> {
        if (1..=MAX_BITS).contains(&bits) {
            Ok(Self(bits))
        } else {
            Err(CodecError::InvalidOrder(bits))
        }
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.0
    }

    /// Side length `2^n`.
    #[inline]
    pub fn side(self) -> u64 {
        1u64 << self.0
    }

    /// Element count `4^n`.
    #[inline]
    pub fn cells(self) -> u64 {
        1u64 << (2 * self.0)
    }

    fn check_coord(self, c: Coord2) -> Result<(), CodecError> {
        let side = self.side();
        if u64::from(c.y) < side && u64::from(c.x) < side {
            Ok(())
        } else {
            Err(CodecError::CoordOutOfRange { y: c.y, x: c.x, side })
        }
    }

    fn check_index(self, i: LinearIndex) -> Result<(), CodecError> {
        let cells = self.cells();
        if i.0 < cells {
            Ok(())
        } else {
            Err(CodecError::IndexOutOfRange { index: i.0, cells })
        }
    }
}

impl TryFrom<u32> for CurveOrder {
    type Error = CodecError;

    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        Self::new(bits)
    }
}

impl From<CurveOrder> for u32 {
    fn from(order: CurveOrder) -> u32 {
        order.0
    }
}

impl fmt::Display for CurveOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Matrix coordinates, `y` (row) major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Coord2 {
    pub y: u32,
    pub x: u32,
}

impl Coord2 {
    pub const fn new(y: u32, x: u32) -> Self {
        Self { y, x }
    }

    pub fn manhattan(self, other: Coord2) -> u64 {
        u64::from(self.y.abs_diff(other.y)) + u64::from(self.x.abs_diff(other.x))
    }
}

impl fmt::Display for Coord2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.y, self.x)
    }
}

/// Position of an element in the backing array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinearIndex(pub u64);

impl LinearIndex {
    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for LinearIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 64-bit word holding payload bits at even positions only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DilatedWord(u64);

impl DilatedWord {
    /// Wraps `value`, clearing any odd-position bits.
    pub fn from_raw(value: u64) -> Self {
        Self(value & EVEN_BITS)
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    RowMajor,
    Morton,
    Hilbert,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 3] = [LayoutKind::RowMajor, LayoutKind::Morton, LayoutKind::Hilbert];

    /// Stable lowercase name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::RowMajor => "rowmajor",
            LayoutKind::Morton => "morton",
            LayoutKind::Hilbert => "hilbert",
        }
    }

    /// Two-letter label used in tables (RM, MO, HO).
    pub fn short(self) -> &'static str {
        match self {
            LayoutKind::RowMajor => "RM",
            LayoutKind::Morton => "MO",
            LayoutKind::Hilbert => "HO",
        }
    }

    /// Tag stored in matrix fixture headers.
    pub fn tag(self) -> u32 {
        match self {
            LayoutKind::RowMajor => 0,
            LayoutKind::Morton => 1,
            LayoutKind::Hilbert => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn encode(self, c: Coord2, order: CurveOrder) -> Result<LinearIndex, CodecError> {
        encode(self, c, order)
    }

    pub fn decode(self, i: LinearIndex, order: CurveOrder) -> Result<Coord2, CodecError> {
        decode(self, i, order)
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LayoutKind {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rowmajor" | "row-major" | "rm" => Ok(LayoutKind::RowMajor),
            "morton" | "zorder" | "z-order" | "mo" | "zo" => Ok(LayoutKind::Morton),
            "hilbert" | "ho" => Ok(LayoutKind::Hilbert),
            _ => Err(CodecError::UnknownLayout(s.to_owned())),
        }
    }
}

// ---------------------------------------------------------------------------
// Dilation

const EVEN_BITS: u64 = 0x5555_5555_5555_5555;

/// `(shift, mask)` steps spreading a 32-bit payload over the even bit positions.
const DILATE_STEPS: [(u32, u64); 5] = [
    (16, 0x0000_FFFF_0000_FFFF),
    (8, 0x00FF_00FF_00FF_00FF),
    (4, 0x0F0F_0F0F_0F0F_0F0F),
    (2, 0x3333_3333_3333_3333),
    (1, EVEN_BITS),
];

/// Spreads bit `i` of `v` to bit `2i` using five shift-or / mask steps.
#[inline]
pub fn dilate(v: u32) -> DilatedWord {
    let mut w = u64::from(v);
    // unrolled by the compiler; the table keeps the constants in one place
    for (shift, mask) in DILATE_STEPS {
        w = (w | (w << shift)) & mask;
    }
    DilatedWord(w)
}

/// Inverse of [`dilate`]. Odd-position bits are masked away.
#[inline]
pub fn undilate(w: DilatedWord) -> u32 {
    let mut v = w.0 & EVEN_BITS;
    v = (v | (v >> 1)) & 0x3333_3333_3333_3333;
    v = (v | (v >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    v = (v | (v >> 4)) & 0x00FF_00FF_00FF_00FF;
    v = (v | (v >> 8)) & 0x0000_FFFF_0000_FFFF;
    v = (v | (v >> 16)) & 0x0000_0000_FFFF_FFFF;
    v as u32
}

// ---------------------------------------------------------------------------
// Unchecked index kernels. Callers guarantee coordinates are in range.

#[inline(always)]
pub(crate) fn rowmajor_raw(y: u32, x: u32, bits: u32) -> u64 {
    (u64::from(y) << bits) + u64::from(x)
}

#[inline(always)]
pub(crate) fn morton_raw(y: u32, x: u32) -> u64 {
    (dilate(y).0 << 1) | dilate(x).0
}

/// Hilbert quadrant label for an interleaved `(y bit, x bit)` pair.
const PAIR_TO_QUADRANT: [u64; 4] = [0, 1, 3, 2];
/// Interleaved `(y bit, x bit)` pair for a Hilbert quadrant label.
const QUADRANT_TO_PAIR: [u64; 4] = [0b00, 0b01, 0b11, 0b10];

/// Exchanges the y (odd) and x (even) bit of every pair.
#[inline(always)]
fn swap_pairs(w: u64) -> u64 {
    ((w & EVEN_BITS) << 1) | ((w >> 1) & EVEN_BITS)
}

/// Applies the orientation change of `quadrant` to the interleaved bits below
/// it. Quadrant 0 transposes, quadrant 3 transposes and complements, 1 and 2
/// keep the parent orientation. Both transforms are involutions.
#[inline(always)]
fn reorient(quadrant: u64, trailing: u64, trailing_mask: u64) -> u64 {
    match quadrant {
        0 => swap_pairs(trailing),
        3 => swap_pairs(trailing) ^ trailing_mask,
        _ => trailing,
    }
}

/// Hilbert index from a Morton word, scanning bit pairs most significant first.
#[inline(always)]
pub(crate) fn morton_to_hilbert(mut word: u64, bits: u32) -> u64 {
    let mut out = 0u64;
    for level in (0..bits).rev() {
        let shift = 2 * level;
        let quadrant = PAIR_TO_QUADRANT[((word >> shift) & 3) as usize];
        out |= quadrant << shift;
        let trailing_mask = (1u64 << shift) - 1;
        word = reorient(quadrant, word & trailing_mask, trailing_mask);
    }
    out
}

/// Morton word from a Hilbert index, rebuilding from the least significant
/// pair upwards and undoing each level's reorientation of the bits below it.
#[inline]
pub(crate) fn hilbert_to_morton(index: u64, bits: u32) -> u64 {
    let mut word = 0u64;
    for level in 0..bits {
        let shift = 2 * level;
        let quadrant = (index >> shift) & 3;
        let trailing_mask = (1u64 << shift) - 1;
        word = reorient(quadrant, word, trailing_mask) | (QUADRANT_TO_PAIR[quadrant as usize] << shift);
    }
    word
}

#[inline(always)]
pub(crate) fn hilbert_raw(y: u32, x: u32, bits: u32) -> u64 {
    morton_to_hilbert(morton_raw(y, x), bits)
}

#[inline]
fn split_morton(word: u64) -> Coord2 {
    Coord2 {
        y: undilate(DilatedWord(word >> 1)),
        x: undilate(DilatedWord(word)),
    }
}

// ---------------------------------------------------------------------------
// Checked public operations

pub fn rowmajor_encode(c: Coord2, order: CurveOrder) -> Result<LinearIndex, CodecError> {
    order.check_coord(c)?;
    Ok(LinearIndex(rowmajor_raw(c.y, c.x, order.bits())))
}

pub fn rowmajor_decode(i: LinearIndex, order: CurveOrder) -> Result<Coord2, CodecError> {
    order.check_index(i)?;
    let bits = order.bits();
    Ok(Coord2 {
        y: (i.0 >> bits) as u32,
        x: (i.0 & (order.side() - 1)) as u32,
    })
}

pub fn morton_encode(c: Coord2, order: CurveOrder) -> Result<LinearIndex, CodecError> {
    order.check_coord(c)?;
    Ok(LinearIndex(morton_raw(c.y, c.x)))
}

pub fn morton_decode(i: LinearIndex, order: CurveOrder) -> Result<Coord2, CodecError> {
    order.check_index(i)?;
    Ok(split_morton(i.0))
}

pub fn hilbert_encode(c: Coord2, order: CurveOrder) -> Result<LinearIndex, CodecError> {
    order.check_coord(c)?;
    Ok(LinearIndex(hilbert_raw(c.y, c.x, order.bits())))
}

pub fn hilbert_decode(i: LinearIndex, order: CurveOrder) -> Result<Coord2, CodecError> {
    order.check_index(i)?;
    Ok(split_morton(hilbert_to_morton(i.0, order.bits())))
}

pub fn encode(kind: LayoutKind, c: Coord2, order: CurveOrder) -> Result<LinearIndex, CodecError> {
    match kind {
        LayoutKind::RowMajor => rowmajor_encode(c, order),
        LayoutKind::Morton => morton_encode(c, order),
        LayoutKind::Hilbert => hilbert_encode(c, order),
    }
}

pub fn decode(kind: LayoutKind, i: LinearIndex, order: CurveOrder) -> Result<Coord2, CodecError> {
    match kind {
        LayoutKind::RowMajor => rowmajor_decode(i, order),
        LayoutKind::Morton => morton_decode(i, order),
        LayoutKind::Hilbert => hilbert_decode(i, order),
    }
}

// ---------------------------------------------------------------------------
// Static cost model

/// Row-major: one multiplication (the shift) and one addition.
const ROWMAJOR_OPS: u32 = 2;
/// Two dilations of 5 shifts + 5 masks each, then a shift and an or to combine.
const MORTON_OPS: u32 = 2 * (5 + 5) + 2;
/// Per bit pair: extract (shift, mask), quadrant lookup, deposit (shift, or),
/// trailing mask, and the swap/complement rewrite (2 masks, 2 shifts, or, xor).
const HILBERT_OPS_PER_LEVEL: u32 = 2 + 1 + 2 + 1 + 6;

/// Primitive shift/mask/arithmetic operations performed by one encode.
pub fn op_cost(kind: LayoutKind, order: CurveOrder) -> u32 {
    match kind {
        LayoutKind::RowMajor => ROWMAJOR_OPS,
        LayoutKind::Morton => MORTON_OPS,
        LayoutKind::Hilbert => MORTON_OPS + HILBERT_OPS_PER_LEVEL * order.bits(),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Slow reference constructions, independent of the bit tricks above.

    /// Places bit `i` of `v` at position `2i`, one bit at a time.
    pub fn dilate_loop(v: u32) -> u64 {
        (0..32).fold(0u64, |acc, i| acc | (u64::from((v >> i) & 1) << (2 * i)))
    }

    /// Interleaves y (odd positions) and x (even positions) bit by bit.
    pub fn interleave_loop(y: u32, x: u32) -> u64 {
        (dilate_loop(y) << 1) | dilate_loop(x)
    }

    /// Hilbert index grid `grid[y][x]` built by recursive replication of the
    /// 2x2 base pattern: quadrant 0 transposed, 3 anti-transposed.
    pub fn hilbert_grid(bits: u32) -> Vec<Vec<u64>> {
        if bits == 1 {
            return vec![vec![0, 1], vec![3, 2]];
        }
        let sub = hilbert_grid(bits - 1);
        let half = 1usize << (bits - 1);
        let quarter = (half * half) as u64;
        let side = half * 2;
        let mut grid = vec![vec![0u64; side]; side];
        for (y, row) in grid.iter_mut().enumerate() {
            for (x, cell) in row.iter_mut().enumerate() {
                let (ly, lx) = (y % half, x % half);
                *cell = match (y >= half, x >= half) {
                    (false, false) => sub[lx][ly],
                    (false, true) => quarter + sub[ly][lx],
                    (true, true) => 2 * quarter + sub[ly][lx],
                    (true, false) => 3 * quarter + sub[half - 1 - lx][half - 1 - ly],
                };
            }
        }
        grid
    }
}
