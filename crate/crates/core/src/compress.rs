//! Reck decomposition and effective-band compression into nearest-neighbor gates.
//!
//! The sweep multiplies `U` on the right by 2x2 column rotations on adjacent columns,
//! bottom row first and left to right within a row, until the result `D` is close to
//! the identity. Inverting the rotations (and the final phases) gives the gate list of
//! the approximation `U~`, with `||U - U~||_hs = ||D - I||_hs`.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::geometry::GeometrySpec;
use crate::numerics::{ensure_square, hs_norm, unitarity_defect};
use crate::sampler::defect_tolerance;
use crate::{Complex, ComplexMatrix, Error, Real, Result};

/// Targets below this modulus are skipped by the banded sweep.
pub const SKIP_TOL: f64 = 1e-15;
/// Unitarity tolerance for gate blocks read from files.
pub const BLOCK_TOL: f64 = 1e-12;

/// One gate. Modes are 0-based; two-mode gates act on `(mode, mode + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Gate<R: Real> {
    TwoMode {
        mode: usize,
        block: Matrix2<Complex<R>>,
    },
    Phase {
        mode: usize,
        phase: Complex<R>,
    },
}

impl<R: Real> Gate<R> {
    pub fn is_two_mode(&self) -> bool {
        matches!(self, Gate::TwoMode { .. })
    }

    fn max_mode(&self) -> usize {
        match self {
            Gate::TwoMode { mode, .. } => mode + 1,
            Gate::Phase { mode, .. } => *mode,
        }
    }

    /// Left-multiplies `m` by this gate embedded in the identity.
    pub fn apply_left(&self, m: &mut ComplexMatrix<R>) {
        match self {
            Gate::TwoMode { mode, block } => {
                for c in 0..m.ncols() {
                    let (a, b) = (m[(*mode, c)], m[(mode + 1, c)]);
                    m[(*mode, c)] = block[(0, 0)] * a + block[(0, 1)] * b;
                    m[(mode + 1, c)] = block[(1, 0)] * a + block[(1, 1)] * b;
                }
            }
            Gate::Phase { mode, phase } => {
                for c in 0..m.ncols() {
                    m[(*mode, c)] *= *phase;
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum GateKind {
    TwoMode,
    Phase,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BlockRepr {
    Matrix(Vec<[f64; 2]>),
    Scalar([f64; 2]),
}

/// File form: 1-based modes, 2x2 blocks as four row-major `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct GateRepr {
    kind: GateKind,
    modes: Vec<usize>,
    block: BlockRepr,
}

fn pair<R: Real>(z: Complex<R>) -> [f64; 2] {
    [z.re.as_f64(), z.im.as_f64()]
}

fn unpair<R: Real>(p: [f64; 2]) -> Complex<R> {
    Complex::new(R::lit(p[0]), R::lit(p[1]))
}

impl<R: Real> Serialize for Gate<R> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Gate::TwoMode { mode, block } => GateRepr {
                kind: GateKind::TwoMode,
                modes: vec![mode + 1, mode + 2],
                block: BlockRepr::Matrix(vec![
                    pair(block[(0, 0)]),
                    pair(block[(0, 1)]),
                    pair(block[(1, 0)]),
                    pair(block[(1, 1)]),
                ]),
            },
            Gate::Phase { mode, phase } => GateRepr {
                kind: GateKind::Phase,
                modes: vec![mode + 1],
                block: BlockRepr::Scalar(pair(*phase)),
            },
        };
        repr.serialize(s)
    }
}

impl<'de, R: Real> Deserialize<'de> for Gate<R> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = GateRepr::deserialize(d)?;
        match (repr.kind, repr.modes.as_slice(), repr.block) {
            (GateKind::TwoMode, &[a, b], BlockRepr::Matrix(v)) if a >= 1 && b == a + 1 => {
                if v.len() != 4 {
                    return Err(D::Error::custom("two-mode block needs 4 entries"));
                }
                let block: Matrix2<Complex<R>> =
                    Matrix2::new(unpair(v[0]), unpair(v[1]), unpair(v[2]), unpair(v[3]));
                let defect: R = hs_norm(&ComplexMatrix::from_iterator(
                    2,
                    2,
                    (block.adjoint() * block - Matrix2::identity())
                        .iter()
                        .copied(),
                ));
                if defect.as_f64() > BLOCK_TOL {
                    return Err(D::Error::custom(format!(
                        "gate block not unitary: {defect}"
                    )));
                }
                Ok(Gate::TwoMode { mode: a - 1, block })
            }
            (GateKind::Phase, &[a], BlockRepr::Scalar(p)) if a >= 1 => {
                let phase = unpair::<R>(p);
                if (phase.norm_sqr().as_f64() - 1.0).abs() > BLOCK_TOL {
                    return Err(D::Error::custom("phase must have unit modulus"));
                }
                Ok(Gate::Phase { mode: a - 1, phase })
            }
            _ => Err(D::Error::custom(
                "expected two-mode gate on adjacent modes or phase gate on one mode",
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompressionResult<R: Real> {
    /// Gates of `U~` in application order.
    pub gates: Vec<Gate<R>>,
    pub band: usize,
    /// `||U - U~||_hs`.
    pub hs_error: f64,
    /// Two-mode gates.
    pub gate_count: usize,
    pub phase_count: usize,
    /// `|D_jj|^2` for `j = 0..n`.
    pub diag_profile: Vec<f64>,
    /// Max over rows of the l2 norm of the input entries left of the band.
    pub eps_hat: f64,
    /// Max over rows of the l2 norm left of the diagonal after the sweep.
    pub residual_left: f64,
}

impl<R: Real> CompressionResult<R> {
    /// `|D_{n-1-j, n-1-j}|^2 >= 1 - (j + 1) eps^2` for every `j`.
    pub fn close_diag_holds(&self, eps: f64, slack: f64) -> bool {
        let n = self.diag_profile.len();
        (0..n).all(|j| self.diag_profile[n - 1 - j] >= 1.0 - (j as f64 + 1.0) * eps * eps - slack)
    }
}

/// Rotation on columns `(m, m+1)` sending row entries `(a, b)` to `(0, rho)`.
fn zeroing_rotation<R: Real>(a: Complex<R>, b: Complex<R>) -> Matrix2<Complex<R>> {
    let rho = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if rho == R::zero() {
        return Matrix2::identity();
    }
    let inv = Complex::new(R::one() / rho, R::zero());
    Matrix2::new(b * inv, a.conj() * inv, -a * inv, b.conj() * inv)
}

/// Right-multiplies columns `(m, m+1)` of `d` by `t`.
fn rotate_columns<R: Real>(d: &mut ComplexMatrix<R>, m: usize, t: &Matrix2<Complex<R>>) {
    for r in 0..d.nrows() {
        let (a, b) = (d[(r, m)], d[(r, m + 1)]);
        d[(r, m)] = a * t[(0, 0)] + b * t[(1, 0)];
        d[(r, m + 1)] = a * t[(0, 1)] + b * t[(1, 1)];
    }
}

fn left_mass<R: Real>(d: &ComplexMatrix<R>, offset: usize) -> f64 {
    (0..d.nrows())
        .map(|r| {
            (0..r.saturating_sub(offset))
                .map(|c| d[(r, c)].norm_sqr().as_f64())
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn sweep<R: Real>(u: &ComplexMatrix<R>, w: usize, skip: bool) -> Result<CompressionResult<R>> {
    let n = ensure_square(u)?;
    let defect = unitarity_defect(u)?.as_f64();
    let tol = defect_tolerance::<R>();
    if !(defect <= tol) {
        return Err(Error::NonUnitary { defect, tol });
    }
    if n > 1 && !(1..n).contains(&w) {
        return Err(Error::InvalidArgument(format!(
            "band {w} outside 1..={} for {n} modes",
            n - 1
        )));
    }
    let eps_hat = left_mass(u, w);
    let mut d = u.clone();
    let mut rotations = Vec::new();
    for r in (1..n).rev() {
        for m in r.saturating_sub(w)..r {
            let (a, b) = (d[(r, m)], d[(r, m + 1)]);
            if skip && a.norm_sqr().sqrt().as_f64() < SKIP_TOL {
                continue;
            }
            let t = zeroing_rotation(a, b);
            rotate_columns(&mut d, m, &t);
            d[(r, m)] = Complex::new(R::zero(), R::zero());
            rotations.push((m, t));
        }
    }
    let residual_left = left_mass(&d, 0);
    let mut phases = Vec::with_capacity(n);
    for j in 0..n {
        let z = d[(j, j)];
        let r = z.norm_sqr().sqrt();
        let phi = if r > R::zero() {
            z.conj() * Complex::new(R::one() / r, R::zero())
        } else {
            Complex::new(R::one(), R::zero())
        };
        for i in 0..n {
            d[(i, j)] *= phi;
        }
        phases.push(phi);
    }
    let diag_profile = (0..n).map(|j| d[(j, j)].norm_sqr().as_f64()).collect();
    for j in 0..n {
        d[(j, j)] -= Complex::new(R::one(), R::zero());
    }
    let hs_error = hs_norm(&d).as_f64();
    // U ~= (T_1 ... T_K Phi)^{-1}: apply T_1^dagger first, Phi^dagger last.
    let gate_count = rotations.len();
    let mut gates: Vec<Gate<R>> = rotations
        .into_iter()
        .map(|(mode, t)| Gate::TwoMode {
            mode,
            block: t.adjoint(),
        })
        .collect();
    gates.extend(phases.into_iter().enumerate().map(|(mode, p)| Gate::Phase {
        mode,
        phase: p.conj(),
    }));
    Ok(CompressionResult {
        gates,
        band: w,
        hs_error,
        gate_count,
        phase_count: n,
        diag_profile,
        eps_hat,
        residual_left,
    })
}

/// Exact decomposition into `n(n-1)/2` nearest-neighbor two-mode gates and `n` phases,
/// in application order.
pub fn reck_decompose<R: Real>(u: &ComplexMatrix<R>) -> Result<Vec<Gate<R>>> {
    let n = ensure_square(u)?;
    Ok(sweep(u, n.saturating_sub(1).max(1), false)?.gates)
}

/// Zeroes only the below-diagonal entries within `w` of the diagonal.
pub fn banded_compress<R: Real>(u: &ComplexMatrix<R>, w: usize) -> Result<CompressionResult<R>> {
    sweep(u, w, true)
}

/// `w = ceil(c_band sqrt(d ln d))`, capped at `n - 1`.
///
/// `kappa` sets the target entry size `d^-kappa` outside the band; it enters only
/// through the choice of `c_band`.
pub fn effective_bandwidth(d: usize, kappa: f64, c_band: f64, n: usize) -> Result<usize> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "depth must be at least 2, got {d}"
        )));
    }
    if !(kappa >= 1.0) || !(c_band > 0.0) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need kappa >= 1, c_band > 0, n >= 2; got {kappa}, {c_band}, {n}"
        )));
    }
    let df = d as f64;
    let w = (c_band * (df * df.ln()).sqrt()).ceil() as usize;
    Ok(w.clamp(1, n - 1))
}

/// Product of the gates (first gate applied first).
pub fn reconstruct<R: Real>(gates: &[Gate<R>], n: usize) -> Result<ComplexMatrix<R>> {
    if let Some(g) = gates.iter().find(|g| g.max_mode() >= n) {
        return Err(Error::InvalidArgument(format!(
            "gate on mode {} out of range for {n} modes",
            g.max_mode() + 1
        )));
    }
    let mut m = ComplexMatrix::identity(n, n);
    for g in gates {
        g.apply_left(&mut m);
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NaiveCount {
    pub two_mode: usize,
    pub phase: usize,
}

/// Gate count of the sampled brickwall circuit itself.
pub fn gate_count_naive(geometry: &GeometrySpec, d: usize) -> Result<NaiveCount> {
    if !geometry.is_brickwall() {
        return Err(Error::UnsupportedGeometry(format!(
            "naive gate count is defined for brickwall circuits, got {}",
            geometry.label().name()
        )));
    }
    let n = geometry.n();
    Ok(NaiveCount {
        two_mode: d * (n - 1),
        phase: 2 * d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{brickwall_geometry, octahedral_geometry};
    use crate::sampler::{haar_unitary, sample_circuit, RngStream};
    use crate::CMatrix;

    fn err(a: &CMatrix, b: &CMatrix) -> f64 {
        hs_norm(&(a - b))
    }

    #[test]
    fn reck_counts_and_round_trip() {
        for n in [1usize, 2, 3, 4, 8, 16] {
            let u: CMatrix = haar_unitary(n, &mut RngStream::new(n as u64).rng()).unwrap();
            let gates = reck_decompose(&u).unwrap();
            let two = gates.iter().filter(|g| g.is_two_mode()).count();
            assert_eq!(two, n * (n - 1) / 2, "n={n}");
            assert_eq!(gates.len() - two, n);
            let back = reconstruct(&gates, n).unwrap();
            assert!(err(&back, &u) <= 1e-7 * n as f64);
            assert!(unitarity_defect(&back).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn reck_rejects_non_unitary() {
        let mut u = CMatrix::identity(3, 3);
        u[(0, 1)] = Complex::new(0.1, 0.0);
        assert!(matches!(reck_decompose(&u), Err(Error::NonUnitary { .. })));
        assert!(matches!(
            reck_decompose(&CMatrix::zeros(2, 3)),
            Err(Error::NonSquare { .. })
        ));
    }

    #[test]
    fn reck_of_identity_keeps_count() {
        let gates = reck_decompose(&CMatrix::identity(4, 4)).unwrap();
        assert_eq!(gates.iter().filter(|g| g.is_two_mode()).count(), 6);
        assert!(err(&reconstruct(&gates, 4).unwrap(), &CMatrix::identity(4, 4)) < 1e-14);
    }

    #[test]
    fn full_band_is_exact() {
        let u: CMatrix = haar_unitary(10, &mut RngStream::new(3).rng()).unwrap();
        let res = banded_compress(&u, 9).unwrap();
        assert!(res.hs_error <= 1e-7 * 10.0);
        assert_eq!(res.eps_hat, 0.0);
        let back = reconstruct(&res.gates, 10).unwrap();
        assert!((err(&back, &u) - res.hs_error).abs() <= 1e-10);
    }

    #[test]
    fn banded_input_is_exact() {
        let g = brickwall_geometry(24).unwrap();
        for d in [1usize, 2, 3, 5] {
            let s = sample_circuit::<f64>(&g, d, RngStream::new(d as u64)).unwrap();
            let res = banded_compress(&s.u, 2 * d).unwrap();
            assert_eq!(res.eps_hat, 0.0);
            assert!(res.hs_error <= 1e-7 * 24.0, "d={d}: {}", res.hs_error);
            let bound = 24 * 2 * d - 2 * d * (2 * d + 1) / 2;
            assert!(res.gate_count <= bound);
        }
    }

    #[test]
    fn banded_properties() {
        let g = brickwall_geometry(32).unwrap();
        let s = sample_circuit::<f64>(&g, 30, RngStream::new(7)).unwrap();
        for w in [3usize, 8, 14] {
            let res = banded_compress(&s.u, w).unwrap();
            assert!(res.gate_count <= 32 * w - w * (w + 1) / 2);
            let back = reconstruct(&res.gates, 32).unwrap();
            assert!(unitarity_defect(&back).unwrap() <= 1e-8);
            assert!((err(&back, &s.u) - res.hs_error).abs() <= 1e-10);
            assert!(res.residual_left <= res.eps_hat + 1e-10);
            assert!(res.close_diag_holds(res.eps_hat, 1e-10), "w={w}");
        }
        assert!(banded_compress(&s.u, 0).is_err());
        assert!(banded_compress(&s.u, 32).is_err());
    }

    #[test]
    fn bandwidth_examples() {
        assert_eq!(effective_bandwidth(100, 2.0, 2.0, 1000).unwrap(), 43);
        let w = effective_bandwidth(2, 1.0, 1.0, 1000).unwrap();
        assert!((1..=2).contains(&w));
        assert_eq!(effective_bandwidth(10_000, 2.0, 5.0, 64).unwrap(), 63);
        assert!(effective_bandwidth(1, 2.0, 2.0, 10).is_err());
        assert!(effective_bandwidth(10, 0.5, 2.0, 10).is_err());
    }

    #[test]
    fn reconstruct_cases() {
        assert_eq!(reconstruct::<f64>(&[], 3).unwrap(), CMatrix::identity(3, 3));
        let ph = Complex::new(0.0, 1.0);
        let m = reconstruct(&[Gate::Phase { mode: 2, phase: ph }], 4).unwrap();
        let mut want = CMatrix::identity(4, 4);
        want[(2, 2)] = ph;
        assert_eq!(m, want);
        let bad = Gate::TwoMode {
            mode: 3,
            block: Matrix2::identity(),
        };
        assert!(reconstruct::<f64>(&[bad], 4).is_err());
    }

    #[test]
    fn naive_counts() {
        let g8 = brickwall_geometry(8).unwrap();
        assert_eq!(gate_count_naive(&g8, 1).unwrap().two_mode, 7);
        assert_eq!(
            gate_count_naive(&brickwall_geometry(2).unwrap(), 3)
                .unwrap()
                .two_mode,
            3
        );
        assert_eq!(gate_count_naive(&g8, 10).unwrap().two_mode, 70);
        assert!(gate_count_naive(&octahedral_geometry(), 1).is_err());
    }

    #[test]
    fn gate_json_round_trip() {
        let u: CMatrix = haar_unitary(5, &mut RngStream::new(11).rng()).unwrap();
        let gates = reck_decompose(&u).unwrap();
        let text = serde_json::to_string(&gates).unwrap();
        let back: Vec<Gate<f64>> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, gates);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v[0]["kind"], "two-mode");
        assert_eq!(
            v[0]["modes"][1].as_u64().unwrap(),
            v[0]["modes"][0].as_u64().unwrap() + 1
        );
        assert!(serde_json::from_str::<Gate<f64>>(
            r#"{"kind":"two-mode","modes":[1,3],"block":[[1,0],[0,0],[0,0],[1,0]]}"#
        )
        .is_err());
        assert!(
            serde_json::from_str::<Gate<f64>>(r#"{"kind":"phase","modes":[2],"block":[2,0]}"#)
                .is_err()
        );
    }

    #[test]
    fn f32_path() {
        let u: ComplexMatrix<f32> = haar_unitary(4, &mut RngStream::new(2).rng()).unwrap();
        let res = banded_compress(&u, 3).unwrap();
        assert!(res.hs_error < 1e-4);
    }
}
