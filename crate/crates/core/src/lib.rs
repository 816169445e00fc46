//! Space-filling-curve matrix layouts and the tools to measure what they cost.
//!
//! - [`codec`]: row-major, Morton and Hilbert coordinate ↔ index maps.
//! - [`matrix`]: layout-aware `f64` matrices and the naive parallel matmul.
//! - [`cachesim`]: matmul access traces replayed through an LRU cache hierarchy.
//! - [`energy`]: RAPL powercap sampling and trapezoidal energy integration.
//! - [`bench`] and [`analysis`]: the experiment grid, its CSV, and the
//!   speedup / energy-vs-time / cache-miss reports built from it.
//!
//! Runnable walkthroughs live in `examples/`; the `sfc` binary exposes the
//! same operations on the command line.

pub mod analysis;
pub mod bench;
pub mod cachesim;
pub mod codec;
pub mod energy;
pub mod fmt;
pub mod matrix;

pub use codec::{Coord2, CurveOrder, LayoutKind, LinearIndex};
pub use matrix::{matmul, MatrixF64};
