//! Generalized rate-distortion (GRD) surface modeling for compressed video.
//!
//! The crate learns eigen bases from corpora of discretized GRD surfaces,
//! reconstructs full surfaces from sparse `(bitrate, resolution, quality)`
//! samples under monotonicity constraints, orders sample queries by
//! conditional-entropy reduction, and compares codecs with quality-gain and
//! bitrate-saving integrals.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, the precision used by the file
//! formats and the CLI.

// `!(a < b)` is deliberate throughout: it also rejects NaN. Index loops
// mirror the matrix formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod compare;
pub mod error;
pub mod grid;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod qp;
pub mod quad;
pub mod reconstruct;
pub mod sampling;
pub mod scalar;
pub mod synth;

pub use error::{GrdError, Result};
pub use scalar::Real;

pub type AxisSpecF64 = grid::AxisSpec<f64>;
pub type GrdGridF64 = grid::GrdGrid<f64>;
pub type SampleSetF64 = grid::SampleSet<f64>;
pub type Curve1DF64 = interp::Curve1D<f64>;
pub type MatrixF64 = linalg::Matrix<f64>;

pub type GrdGridF32 = grid::GrdGrid<f32>;
