//! Square `f64` matrices stored in row-major, Morton or Hilbert order, and the
//! naive `i-j-k` multiplication shared by all three layouts.
//!
//! The multiplication kernel is identical for every layout: only the
//! coordinate → index function differs, and it is evaluated on every element
//! access. Because the `k` loop is innermost and ascending, the floating-point
//! summation order never depends on the layout or the worker count, so results
//! are bit-identical across both.

use std::io::{self, Read, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{self, CodecError, Coord2, CurveOrder, LayoutKind};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("cannot allocate {0} elements")]
    Alloc(u64),
    #[error("order mismatch: {0} vs {1}")]
    OrderMismatch(CurveOrder, CurveOrder),
    #[error("layout mismatch: {0} vs {1}")]
    LayoutMismatch(LayoutKind, LayoutKind),
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("bad matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixF64 {
    order: CurveOrder,
    layout: LayoutKind,
    data: Vec<f64>,
}

fn alloc(len: u64) -> Result<Vec<f64>, MatrixError> {
    let n = usize::try_from(len).map_err(|_| MatrixError::Alloc(len))?;
    let mut data = Vec::new();
    data.try_reserve_exact(n).map_err(|_| MatrixError::Alloc(len))?;
    data.resize(n, 0.0);
    Ok(data)
}

impl MatrixF64 {
    pub fn zeros(order: CurveOrder, layout: LayoutKind) -> Result<Self, MatrixError> {
        Ok(Self {
            order,
            layout,
            data: alloc(order.cells())?,
        })
    }

    /// Builds a matrix by evaluating `f(y, x)` for every coordinate.
    pub fn from_fn(
        order: CurveOrder,
        layout: LayoutKind,
        mut f: impl FnMut(u32, u32) -> f64,
    ) -> Result<Self, MatrixError> {
        let mut m = Self::zeros(order, layout)?;
        let side = order.side() as u32;
        for y in 0..side {
            for x in 0..side {
                let i = m.index_of(y, x);
                m.data[i] = f(y, x);
            }
        }
        Ok(m)
    }

    pub fn identity(order: CurveOrder, layout: LayoutKind) -> Result<Self, MatrixError> {
        Self::from_fn(order, layout, |y, x| if y == x { 1.0 } else { 0.0 })
    }

    /// Uniform `[0, 1)` entries drawn in row-major order from a seeded
    /// generator, so the logical matrix does not depend on `layout`.
    pub fn random(order: CurveOrder, layout: LayoutKind, rng: &mut impl Rng) -> Result<Self, MatrixError> {
        Self::from_fn(order, LayoutKind::RowMajor, |_, _| rng.random::<f64>())?.convert(layout)
    }

    pub fn random_seeded(order: CurveOrder, layout: LayoutKind, seed: u64) -> Result<Self, MatrixError> {
        Self::random(order, layout, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Wraps an existing backing array, already in `layout` order.
    pub fn from_data(order: CurveOrder, layout: LayoutKind, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() as u64 != order.cells() {
            return Err(MatrixError::Format(format!(
                "expected {} elements, got {}",
                order.cells(),
                data.len()
            )));
        }
        Ok(Self { order, layout, data })
    }

    pub fn order(&self) -> CurveOrder {
        self.order
    }

    pub fn layout(&self) -> LayoutKind {
        self.layout
    }

    pub fn side(&self) -> usize {
        self.order.side() as usize
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn index_of(&self, y: u32, x: u32) -> usize {
        let bits = self.order.bits();
        (match self.layout {
            LayoutKind::RowMajor => codec::rowmajor_raw(y, x, bits),
            LayoutKind::Morton => codec::morton_raw(y, x),
            LayoutKind::Hilbert => codec::hilbert_raw(y, x, bits),
        }) as usize
    }

    pub fn get(&self, c: Coord2) -> Result<f64, MatrixError> {
        let i = codec::encode(self.layout, c, self.order)?;
        Ok(self.data[i.value() as usize])
    }

    pub fn set(&mut self, c: Coord2, v: f64) -> Result<(), MatrixError> {
        let i = codec::encode(self.layout, c, self.order)?;
        self.data[i.value() as usize] = v;
        Ok(())
    }

    /// Copy of this matrix stored under `target`.
    pub fn convert(&self, target: LayoutKind) -> Result<Self, MatrixError> {
        if target == self.layout {
            return Ok(self.clone());
        }
        let mut out = Self::zeros(self.order, target)?;
        let side = self.side() as u32;
        for y in 0..side {
            for x in 0..side {
                let dst = out.index_of(y, x);
                out.data[dst] = self.data[self.index_of(y, x)];
            }
        }
        Ok(out)
    }

    /// Elements in row-major order, whatever the storage layout.
    pub fn to_row_major_vec(&self) -> Vec<f64> {
        let side = self.side() as u32;
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..side {
            for x in 0..side {
                out.push(self.data[self.index_of(y, x)]);
            }
        }
        out
    }

    /// Bitwise comparison of the logical matrices, ignoring storage layout.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self
                .to_row_major_vec()
                .iter()
                .zip(other.to_row_major_vec())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Writes the `SFCM` fixture format: magic, `u32` n, `u32` layout tag,
    /// `u32` reserved (zero), then `4^n` little-endian `f64` in storage order.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), MatrixError> {
        let mut header = [0u8; 16];
        header[..4].copy_from_slice(FIXTURE_MAGIC);
        header[4..8].copy_from_slice(&self.order.bits().to_le_bytes());
        header[8..12].copy_from_slice(&self.layout.tag().to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, MatrixError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..4] != FIXTURE_MAGIC {
            return Err(MatrixError::Format("missing SFCM magic".into()));
        }
        let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
        let order = CurveOrder::new(word(4))?;
        let layout = LayoutKind::from_tag(word(8))
            .ok_or_else(|| MatrixError::Format(format!("unknown layout tag {}", word(8))))?;
        let mut data = alloc(order.cells())?;
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(Self { order, layout, data })
    }
}

pub const FIXTURE_MAGIC: &[u8; 4] = b"SFCM";

// ---------------------------------------------------------------------------
// Multiplication

/// Coordinate → index function, monomorphized into the kernel.
trait IndexMap {
    fn index(y: u32, x: u32, bits: u32) -> usize;
}

struct RowMajorMap;
struct MortonMap;
struct HilbertMap;

impl IndexMap for RowMajorMap {
    #[inline(always)]
    fn index(y: u32, x: u32, bits: u32) -> usize {
        codec::rowmajor_raw(y, x, bits) as usize
    }
}

impl IndexMap for MortonMap {
    #[inline(always)]
    fn index(y: u32, x: u32, _bits: u32) -> usize {
        codec::morton_raw(y, x) as usize
    }
}

impl IndexMap for HilbertMap {
    #[inline(always)]
    fn index(y: u32, x: u32, bits: u32) -> usize {
        codec::hilbert_raw(y, x, bits) as usize
    }
}

/// Output buffer shared by workers that write disjoint element sets.
struct DisjointOut {
    ptr: *mut f64,
    len: usize,
}

// SAFETY: workers own disjoint row blocks and the index maps are bijections,
// so no element is written by two threads, and nothing reads the buffer until
// every worker has been joined.
unsafe impl Send for DisjointOut {}
unsafe impl Sync for DisjointOut {}

impl DisjointOut {
    /// # Safety
    /// No other thread may access index `i` concurrently.
    #[inline(always)]
    unsafe fn write(&self, i: usize, v: f64) {
        assert!(i < self.len);
        unsafe { self.ptr.add(i).write(v) }
    }
}

fn multiply_rows<M: IndexMap>(a: &[f64], b: &[f64], out: &DisjointOut, bits: u32, rows: Range<u32>) {
    let side = 1u32 << bits;
    for y in rows {
        for x in 0..side {
            let mut acc = 0.0;
            for k in 0..side {
                acc += a[M::index(y, k, bits)] * b[M::index(k, x, bits)];
            }
            // SAFETY: row y belongs to this worker alone.
            unsafe { out.write(M::index(y, x, bits), acc) };
        }
    }
}

/// Splits `0..side` into `workers` contiguous blocks, earlier blocks taking the
/// remainder. Workers beyond `side` get empty blocks.
pub fn row_blocks(side: u32, workers: usize) -> Vec<Range<u32>> {
    let workers = workers.max(1) as u32;
    let base = side / workers;
    let extra = side % workers;
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + u32::from(w < extra);
            let block = start..start + len;
            start += len;
            block
        })
        .collect()
}

fn multiply_with<M: IndexMap>(a: &MatrixF64, b: &MatrixF64, c: &mut MatrixF64, workers: usize) {
    let bits = a.order.bits();
    let side = a.order.side() as u32;
    let out = DisjointOut {
        ptr: c.data.as_mut_ptr(),
        len: c.data.len(),
    };
    if workers == 1 {
        multiply_rows::<M>(&a.data, &b.data, &out, bits, 0..side);
        return;
    }
    std::thread::scope(|s| {
        for rows in row_blocks(side, workers).into_iter().filter(|r| !r.is_empty()) {
            let out = &out;
            s.spawn(move || multiply_rows::<M>(&a.data, &b.data, out, bits, rows));
        }
    });
}

/// `C = A · B` with `workers` threads, each owning a contiguous block of
/// output rows. The result uses the inputs' layout.
pub fn matmul(a: &MatrixF64, b: &MatrixF64, workers: usize) -> Result<MatrixF64, MatrixError> {
    if a.order != b.order {
        return Err(MatrixError::OrderMismatch(a.order, b.order));
    }
    if a.layout != b.layout {
        return Err(MatrixError::LayoutMismatch(a.layout, b.layout));
    }
    if workers == 0 {
        return Err(MatrixError::NoWorkers);
    }
    let mut c = MatrixF64::zeros(a.order, a.layout)?;
    match a.layout {
        LayoutKind::RowMajor => multiply_with::<RowMajorMap>(a, b, &mut c, workers),
        LayoutKind::Morton => multiply_with::<MortonMap>(a, b, &mut c, workers),
        LayoutKind::Hilbert => multiply_with::<HilbertMap>(a, b, &mut c, workers),
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ord(n: u32) -> CurveOrder {
        CurveOrder::new(n).unwrap()
    }

    /// Plain nested-Vec triple loop, k innermost.
    fn reference(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += a[i][k] * b[k][j];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn rows_of(m: &MatrixF64) -> Vec<Vec<f64>> {
        m.to_row_major_vec().chunks(m.side()).map(<[f64]>::to_vec).collect()
    }

    #[test]
    fn zeros_examples() {
        assert_eq!(
            MatrixF64::zeros(ord(1), LayoutKind::Morton)
                .unwrap()
                .get(Coord2::new(1, 1))
                .unwrap(),
            0.0
        );
        assert_eq!(MatrixF64::zeros(ord(2), LayoutKind::Hilbert).unwrap().data().len(), 16);
        assert_eq!(
            MatrixF64::zeros(ord(3), LayoutKind::RowMajor)
                .unwrap()
                .data()
                .iter()
                .sum::<f64>(),
            0.0
        );
    }

    #[test]
    fn set_get_placement() {
        let mut m = MatrixF64::zeros(ord(3), LayoutKind::Morton).unwrap();
        m.set(Coord2::new(3, 5), 7.5).unwrap();
        assert_eq!(m.get(Coord2::new(3, 5)).unwrap(), 7.5);
        assert_eq!(m.data()[27], 7.5);
        assert_eq!(m.data().iter().filter(|v| **v != 0.0).count(), 1);

        for kind in LayoutKind::ALL {
            let mut m = MatrixF64::zeros(ord(2), kind).unwrap();
            m.set(Coord2::new(0, 0), 1.0).unwrap();
            assert_eq!(m.data()[0], 1.0);
        }

        let mut m = MatrixF64::zeros(ord(1), LayoutKind::Hilbert).unwrap();
        m.set(Coord2::new(1, 0), 2.0).unwrap();
        assert_eq!(m.data()[3], 2.0);

        assert!(m.set(Coord2::new(2, 0), 1.0).is_err());
        assert!(m.get(Coord2::new(0, 9)).is_err());
    }

    #[test]
    fn convert_examples() {
        let m = MatrixF64::random_seeded(ord(4), LayoutKind::RowMajor, 9).unwrap();
        let back = m
            .convert(LayoutKind::Morton)
            .unwrap()
            .convert(LayoutKind::RowMajor)
            .unwrap();
        assert_eq!(back, m);

        let z = MatrixF64::zeros(ord(3), LayoutKind::RowMajor).unwrap();
        assert_eq!(
            z.convert(LayoutKind::Hilbert).unwrap(),
            MatrixF64::zeros(ord(3), LayoutKind::Hilbert).unwrap()
        );

        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let m = MatrixF64::from_data(ord(1), LayoutKind::RowMajor, vec![a, b, c, d]).unwrap();
        assert_eq!(m.convert(LayoutKind::Hilbert).unwrap().data(), &[a, b, d, c]);
    }

    #[test]
    fn small_product() {
        for kind in LayoutKind::ALL {
            let a = MatrixF64::from_data(ord(1), LayoutKind::RowMajor, vec![1.0, 2.0, 3.0, 4.0])
                .unwrap()
                .convert(kind)
                .unwrap();
            let b = MatrixF64::from_data(ord(1), LayoutKind::RowMajor, vec![5.0, 6.0, 7.0, 8.0])
                .unwrap()
                .convert(kind)
                .unwrap();
            let c = matmul(&a, &b, 1).unwrap();
            assert_eq!(c.to_row_major_vec(), vec![19.0, 22.0, 43.0, 50.0]);
            assert_eq!(c.layout(), kind);
        }
    }

    #[test]
    fn identity_is_neutral() {
        for kind in LayoutKind::ALL {
            let a = MatrixF64::random_seeded(ord(4), kind, 3).unwrap();
            let id = MatrixF64::identity(ord(4), kind).unwrap();
            assert!(matmul(&id, &a, 2).unwrap().bit_eq(&a));
        }
    }

    #[test]
    fn layouts_and_workers_agree_bitwise() {
        for n in 1..=6 {
            let a = MatrixF64::random_seeded(ord(n), LayoutKind::RowMajor, 100 + u64::from(n)).unwrap();
            let b = MatrixF64::random_seeded(ord(n), LayoutKind::RowMajor, 200 + u64::from(n)).unwrap();
            let want = reference(&rows_of(&a), &rows_of(&b));
            for kind in LayoutKind::ALL {
                let (a, b) = (a.convert(kind).unwrap(), b.convert(kind).unwrap());
                for workers in [1, 2, 4, 8] {
                    let c = matmul(&a, &b, workers).unwrap();
                    let got = rows_of(&c);
                    for (gr, wr) in got.iter().zip(&want) {
                        for (g, w) in gr.iter().zip(wr) {
                            assert_eq!(g.to_bits(), w.to_bits(), "n={n} {kind} w={workers}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mismatches_rejected() {
        let a = MatrixF64::zeros(ord(2), LayoutKind::Morton).unwrap();
        let b = MatrixF64::zeros(ord(3), LayoutKind::Morton).unwrap();
        let c = MatrixF64::zeros(ord(2), LayoutKind::Hilbert).unwrap();
        assert!(matches!(matmul(&a, &b, 1), Err(MatrixError::OrderMismatch(..))));
        assert!(matches!(matmul(&a, &c, 1), Err(MatrixError::LayoutMismatch(..))));
        assert!(matches!(matmul(&a, &a, 0), Err(MatrixError::NoWorkers)));
    }

    #[test]
    fn row_blocks_partition() {
        for side in [1u32, 2, 7, 64] {
            for workers in [1usize, 2, 3, 4, 8, 100] {
                let blocks = row_blocks(side, workers);
                assert_eq!(blocks.len(), workers);
                let mut next = 0;
                for b in &blocks {
                    assert_eq!(b.start, next);
                    next = b.end;
                }
                assert_eq!(next, side);
            }
        }
    }

    #[test]
    fn fixture_roundtrip() {
        let m = MatrixF64::random_seeded(ord(3), LayoutKind::Hilbert, 5).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 64 * 8);
        assert_eq!(&buf[..4], b"SFCM");
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        let back = MatrixF64::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);

        buf[0] = b'X';
        assert!(matches!(
            MatrixF64::read_from(buf.as_slice()),
            Err(MatrixError::Format(_))
        ));
    }
}
