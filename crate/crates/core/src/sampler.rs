//! Seeded sampling of Haar blocks, layers, circuits and Haar-random baselines.
//!
//! Every random object is drawn from a [`RngStream`]: a ChaCha8 generator keyed by a
//! 64-bit seed and a 64-bit stream id. Stream ids for trials are derived with
//! [`RngStream::derive`], so trials can run on any worker and in any order while
//! reproducing the same matrices bit for bit.

use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Block, GeometrySpec, Pairing};
use crate::numerics::unitarity_defect;
use crate::{Complex, ComplexMatrix, Error, Real, Result};

/// Largest unitarity defect a sampled circuit may carry.
pub const MAX_CIRCUIT_DEFECT: f64 = 1e-8;

/// Unitarity tolerance for scalar `R`: [`MAX_CIRCUIT_DEFECT`], loosened for `f32`.
pub fn defect_tolerance<R: Real>() -> f64 {
    MAX_CIRCUIT_DEFECT.max(1e4 * R::default_epsilon().as_f64())
}

/// `(seed, stream-id)` pair identifying a reproducible random sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream: 0 }
    }

    /// Child stream for a path of indices (trial, step, ...).
    ///
    /// `stream' = fold(stream, |h, id| splitmix64(h ^ splitmix64(id)))`, with the same seed.
    pub fn derive(&self, ids: &[u64]) -> RngStream {
        let stream = ids
            .iter()
            .fold(self.stream, |h, &id| splitmix64(h ^ splitmix64(id)));
        RngStream {
            seed: self.seed,
            stream,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn complex_normal<R: Real, G: Rng + ?Sized>(rng: &mut G) -> Complex<R>
where
    StandardNormal: Distribution<R>,
{
    Complex::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Haar-random element of U(2): Gram-Schmidt on a complex Ginibre matrix.
pub fn haar_u2<R: Real, G: Rng + ?Sized>(rng: &mut G) -> Matrix2<Complex<R>>
where
    StandardNormal: Distribution<R>,
{
    loop {
        let a: [Complex<R>; 4] = std::array::from_fn(|_| complex_normal(rng));
        let n1 = (a[0].norm_sqr() + a[2].norm_sqr()).sqrt();
        if n1 == R::zero() {
            continue;
        }
        let q0 = a[0].unscale(n1);
        let q2 = a[2].unscale(n1);
        let proj = q0.conj() * a[1] + q2.conj() * a[3];
        let v1 = a[1] - q0 * proj;
        let v3 = a[3] - q2 * proj;
        let n2 = (v1.norm_sqr() + v3.norm_sqr()).sqrt();
        if n2 == R::zero() {
            continue;
        }
        return Matrix2::new(q0, v1.unscale(n2), q2, v3.unscale(n2));
    }
}

/// Uniform point on the unit circle.
pub fn haar_phase<R: Real, G: Rng + ?Sized>(rng: &mut G) -> Complex<R> {
    let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    Complex::new(R::lit(theta.cos()), R::lit(theta.sin()))
}

/// Draws one layer's blocks (in block order) and hands each to `apply`.
fn draw_layer<R: Real, G: Rng + ?Sized>(
    pairing: &Pairing,
    rng: &mut G,
    mut apply: impl FnMut(Block, Matrix2<Complex<R>>),
) where
    StandardNormal: Distribution<R>,
{
    for block in pairing.blocks() {
        let g = match block {
            Block::Single(_) => {
                let z = haar_phase(rng);
                Matrix2::new(
                    z,
                    Complex::new(R::zero(), R::zero()),
                    Complex::new(R::zero(), R::zero()),
                    z,
                )
            }
            Block::Pair(..) => haar_u2(rng),
        };
        apply(block, g);
    }
}

/// Dense `n x n` layer unitary: Haar 2x2 on every pair, Haar phase on every singleton.
pub fn sample_layer<R: Real, G: Rng + ?Sized>(pairing: &Pairing, rng: &mut G) -> ComplexMatrix<R>
where
    StandardNormal: Distribution<R>,
{
    let n = pairing.n();
    let mut m = ComplexMatrix::<R>::zeros(n, n);
    draw_layer(pairing, rng, |block, g| match block {
        Block::Single(a) => m[(a, a)] = g[(0, 0)],
        Block::Pair(a, b) => {
            m[(a, a)] = g[(0, 0)];
            m[(a, b)] = g[(0, 1)];
            m[(b, a)] = g[(1, 0)];
            m[(b, b)] = g[(1, 1)];
        }
    });
    m
}

/// `u <- L u` for a freshly drawn layer `L`, touching only the rows of each block.
///
/// Consumes randomness exactly like [`sample_layer`], so the result is bit-identical
/// to `sample_layer(pairing, rng) * u` up to floating-point summation order.
pub fn apply_layer<R: Real, G: Rng + ?Sized>(
    u: &mut ComplexMatrix<R>,
    pairing: &Pairing,
    rng: &mut G,
) where
    StandardNormal: Distribution<R>,
{
    let rows = u.nrows();
    let cols = u.ncols();
    let data = u.as_mut_slice();
    draw_layer(pairing, rng, |block, g| match block {
        Block::Single(a) => {
            let z = g[(0, 0)];
            for c in 0..cols {
                data[c * rows + a] *= z;
            }
        }
        Block::Pair(a, b) => {
            for c in 0..cols {
                let ia = c * rows + a;
                let ib = c * rows + b;
                let (ra, rb) = (data[ia], data[ib]);
                data[ia] = g[(0, 0)] * ra + g[(0, 1)] * rb;
                data[ib] = g[(1, 0)] * ra + g[(1, 1)] * rb;
            }
        }
    });
}

/// A sampled circuit unitary with its provenance.
#[derive(Clone, Debug)]
pub struct CircuitSample<R: Real> {
    pub u: ComplexMatrix<R>,
    pub geometry: GeometrySpec,
    pub depth: usize,
    pub stream: RngStream,
    /// `||U^dagger U - I||_hs` at build time.
    pub defect: R,
}

/// Incrementally deepened circuit: `U <- U^(d+1) U` one step at a time.
///
/// Deepening from depth `a` to `b` draws exactly the randomness that
/// [`sample_circuit`] would, so intermediate matrices equal direct samples.
pub struct CircuitEvolver<R: Real> {
    geometry: GeometrySpec,
    stream: RngStream,
    rng: ChaCha8Rng,
    u: ComplexMatrix<R>,
    depth: usize,
}

impl<R: Real> CircuitEvolver<R>
where
    StandardNormal: Distribution<R>,
{
    pub fn new(geometry: &GeometrySpec, stream: RngStream) -> Self {
        CircuitEvolver {
            geometry: geometry.clone(),
            stream,
            rng: stream.rng(),
            u: ComplexMatrix::<R>::identity(geometry.n(), geometry.n()),
            depth: 0,
        }
    }

    pub fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            for layer in self.geometry.layers() {
                apply_layer(&mut self.u, layer, &mut self.rng);
            }
        }
        self.depth += steps;
    }

    /// Advance to an absolute depth (no-op if already there or beyond).
    pub fn advance_to(&mut self, depth: usize) {
        self.advance(depth.saturating_sub(self.depth));
    }

    pub fn u(&self) -> &ComplexMatrix<R> {
        &self.u
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Snapshot of the current unitary, checked against [`MAX_CIRCUIT_DEFECT`].
    pub fn sample(&self) -> Result<CircuitSample<R>> {
        let defect = unitarity_defect(&self.u)?;
        let tol = defect_tolerance::<R>();
        if !(defect.as_f64() <= tol) {
            return Err(Error::NonUnitary {
                defect: defect.as_f64(),
                tol,
            });
        }
        Ok(CircuitSample {
            u: self.u.clone(),
            geometry: self.geometry.clone(),
            depth: self.depth,
            stream: self.stream,
            defect,
        })
    }
}

/// `U = U^(d) ... U^(1)` with each step the ordered product of its layers, last layer
/// left-most. Depth 0 is the identity.
pub fn sample_circuit<R: Real>(
    geometry: &GeometrySpec,
    d: usize,
    stream: RngStream,
) -> Result<CircuitSample<R>>
where
    StandardNormal: Distribution<R>,
{
    let mut ev = CircuitEvolver::new(geometry, stream);
    ev.advance(d);
    ev.sample()
}

/// Haar-random `n x n` unitary: QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Real, G: Rng + ?Sized>(n: usize, rng: &mut G) -> Result<ComplexMatrix<R>>
where
    StandardNormal: Distribution<R>,
{
    if n == 0 {
        return Err(Error::InvalidArgument("haar_unitary needs n >= 1".into()));
    }
    let z = DMatrix::from_fn(n, n, |_, _| complex_normal::<R, G>(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm_sqr().sqrt();
        let phase = if norm > R::zero() {
            d.unscale(norm)
        } else {
            Complex::new(R::one(), R::zero())
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}
