//! Simulation and analysis of finite-depth random passive linear-optical circuits.
//!
//! A passive linear-optical network on `n` modes is an `n x n` unitary. Circuits are
//! built from layers of independent Haar-random 2x2 beamsplitter blocks and 1x1 phase
//! shifters arranged by a [`geometry::GeometrySpec`]. The crate covers:
//!
//! * sampling of brickwall, D-dimensional brickwork and custom circuits ([`sampler`]),
//! * Renyi-2 entanglement of equally squeezed vacuum inputs and light-cone bounds
//!   ([`gaussian`]),
//! * the classical lazy walks whose transition probabilities equal second moments of
//!   circuit entries, with mixing and meeting times ([`walk`]),
//! * Monte Carlo estimators for second and fourth moments ([`moments`]),
//! * Reck decomposition and effective-band compression ([`compress`]),
//! * a config-driven experiment runner and CLI ([`experiments`]).
//!
//! The numerical core is generic over the real scalar (see [`Real`]); the aliases below
//! fix it to `f64`, which is what the Monte Carlo layers use. Walk kernels additionally
//! accept exact rationals.

// `!(x <= tol)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compress;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod geometry;
pub mod matrix_io;
pub mod moments;
pub mod numerics;
pub mod sampler;
mod scalar;
pub mod walk;

pub use error::{Error, Result};
pub use nalgebra::Complex;
pub use scalar::{KernelScalar, Real};

/// Dense complex matrix, row/column indices 0-based internally.
pub type ComplexMatrix<R> = nalgebra::DMatrix<Complex<R>>;
/// Dense real matrix.
pub type RealMatrix<R> = nalgebra::DMatrix<R>;

pub type CMatrix = ComplexMatrix<f64>;
pub type RMatrix = RealMatrix<f64>;
pub type Sample = sampler::CircuitSample<f64>;
pub type Entropy = gaussian::EntropyResult<f64>;
pub type Kernel = walk::WalkKernel<f64>;
/// Walk kernel with exact rational entries.
pub type ExactKernel = walk::WalkKernel<num_rational::Rational64>;
pub type Compression = compress::CompressionResult<f64>;
pub type GateList = Vec<compress::Gate<f64>>;
