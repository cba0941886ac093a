//! Renyi-2 entanglement of an equally squeezed vacuum evolved by a passive unitary.
//!
//! With `V = P_G U U^T P_G^T` and `W = V V^dagger` the entropy depends only on the
//! spectrum of `W`. Three routes are provided: the spectral formula (production), the
//! covariance-matrix log-determinant (independent cross-check) and the power series in
//! `tanh^2(2s)` (diagnostics).

use serde::{Deserialize, Serialize};

use crate::geometry::{brickwork_coords, GeometryLabel};
use crate::numerics::{
    clamp_unit_interval, ensure_square, hermitian_eigenvalues, logdet_spd_real, unitarity_defect,
    SPECTRUM_CLAMP_TOL,
};
use crate::sampler::{defect_tolerance, CircuitSample};
use crate::{ComplexMatrix, Error, Real, RealMatrix, Result};

/// Entries of `U U^T` at or below this modulus count as structural zeros.
pub const ZERO_ENTRY_TOL: f64 = 1e-13;

/// Slack allowed when comparing an entropy against an upper bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Strictly increasing set of modes, 0-based internally, 1-based when serialized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct Subsystem {
    modes: Vec<usize>,
}

impl Subsystem {
    /// From 1-based mode indices on `n` modes.
    pub fn new(n: usize, one_based: &[usize]) -> Result<Self> {
        if one_based.is_empty() {
            return Err(Error::InvalidSubsystem("empty subsystem".into()));
        }
        if one_based.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSubsystem(
                "modes must be strictly increasing".into(),
            ));
        }
        if one_based[0] == 0 || *one_based.last().unwrap() > n {
            return Err(Error::InvalidSubsystem(format!(
                "modes must lie in 1..={n}"
            )));
        }
        Ok(Subsystem {
            modes: one_based.iter().map(|m| m - 1).collect(),
        })
    }

    /// The first `k` modes.
    pub fn first(k: usize, n: usize) -> Result<Self> {
        Subsystem::new(n, &(1..=k).collect::<Vec<_>>())
    }

    pub fn complement(&self, n: usize) -> Result<Self> {
        let rest: Vec<usize> = (0..n)
            .filter(|m| self.modes.binary_search(m).is_err())
            .map(|m| m + 1)
            .collect();
        Subsystem::new(n, &rest)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// 0-based modes.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Whether the subsystem is `{1, ..., k}`.
    pub fn is_prefix(&self) -> bool {
        self.modes.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn contains(&self, mode: usize) -> bool {
        self.modes.binary_search(&mode).is_ok()
    }

    pub fn check_fits(&self, n: usize) -> Result<()> {
        match self.modes.last() {
            Some(&m) if m < n => Ok(()),
            _ => Err(Error::InvalidSubsystem(format!(
                "subsystem does not fit in {n} modes"
            ))),
        }
    }
}

impl From<Subsystem> for Vec<usize> {
    fn from(s: Subsystem) -> Self {
        s.modes.iter().map(|m| m + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for Subsystem {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        let n = v.iter().copied().max().unwrap_or(0);
        Subsystem::new(n, &v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Eig,
    Cov,
    Series,
}

/// Renyi-2 entropy in nats.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyResult<R: Real> {
    pub value: R,
    pub route: Route,
    /// Clamped eigenvalues of `W`, ascending; empty for the covariance route.
    pub spectrum: Vec<R>,
    pub series_terms: Option<usize>,
}

fn check_unitary<R: Real>(u: &ComplexMatrix<R>, gamma: &Subsystem) -> Result<()> {
    let n = ensure_square(u)?;
    gamma.check_fits(n)?;
    let defect = unitarity_defect(u)?;
    let tol = defect_tolerance::<R>();
    if !(defect.as_f64() <= tol) {
        return Err(Error::NonUnitary {
            defect: defect.as_f64(),
            tol,
        });
    }
    Ok(())
}

fn gamma_rows<R: Real>(u: &ComplexMatrix<R>, gamma: &Subsystem) -> ComplexMatrix<R> {
    u.select_rows(gamma.modes())
}

/// `V = P_G U U^T P_G^T`, the `|G| x |G|` block of `U U^T`.
pub fn build_v<R: Real>(u: &ComplexMatrix<R>, gamma: &Subsystem) -> Result<ComplexMatrix<R>> {
    check_unitary(u, gamma)?;
    let rows = gamma_rows(u, gamma);
    Ok(&rows * rows.transpose())
}

/// `W = V V^dagger`.
pub fn build_w<R: Real>(u: &ComplexMatrix<R>, gamma: &Subsystem) -> Result<ComplexMatrix<R>> {
    let v = build_v(u, gamma)?;
    Ok(&v * v.adjoint())
}

/// Spectrum of `W`, clamped into `[0, 1]`.
pub fn w_spectrum<R: Real>(u: &ComplexMatrix<R>, gamma: &Subsystem) -> Result<Vec<R>> {
    let w = build_w(u, gamma)?;
    let mut eig = hermitian_eigenvalues(&w, R::lit(1e-10))?;
    clamp_unit_interval(&mut eig, R::lit(SPECTRUM_CLAMP_TOL))?;
    Ok(eig)
}

fn check_squeezing<R: Real>(s: R) -> Result<()> {
    if s >= R::zero() && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "squeezing must be finite and >= 0, got {}",
            s.as_f64()
        )))
    }
}

/// Entropy from an already clamped `W` spectrum.
///
/// `|G| log cosh 2s + 1/2 sum log(1 - tanh^2(2s) l)` rearranged to
/// `1/2 sum log(1 + sinh^2(2s) (1 - l))`, so eigenvalues equal to 1 contribute exactly 0.
pub fn entropy_from_spectrum<R: Real>(spectrum: &[R], s: R) -> R {
    let sh2 = (R::lit(2.0) * s).sinh().powi(2);
    spectrum
        .iter()
        .map(|&l| (sh2 * (R::one() - l)).ln_1p())
        .fold(R::zero(), |a, b| a + b)
        * R::lit(0.5)
}

/// Production route: eigenvalues of `W`.
pub fn renyi2_eig<R: Real>(
    u: &ComplexMatrix<R>,
    gamma: &Subsystem,
    s: R,
) -> Result<EntropyResult<R>> {
    check_squeezing(s)?;
    let spectrum = w_spectrum(u, gamma)?;
    Ok(EntropyResult {
        value: entropy_from_spectrum(&spectrum, s),
        route: Route::Eig,
        spectrum,
        series_terms: None,
    })
}

/// Reduced covariance matrix `cosh(2s) I + sinh(2s) M`, with `M` assembled from the real
/// and imaginary parts of `P conj(U U^T) P^T`.
pub fn reduced_covariance<R: Real>(
    u: &ComplexMatrix<R>,
    gamma: &Subsystem,
    s: R,
) -> Result<RealMatrix<R>> {
    let b = build_v(u, gamma)?.map(|z| z.conj());
    let k = gamma.len();
    let (ch, sh) = ((R::lit(2.0) * s).cosh(), (R::lit(2.0) * s).sinh());
    let mut sigma = RealMatrix::<R>::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            let z = b[(i, j)];
            sigma[(i, j)] = sh * z.re;
            sigma[(i, k + j)] = sh * z.im;
            sigma[(k + i, j)] = sh * z.im;
            sigma[(k + i, k + j)] = -sh * z.re;
        }
    }
    for i in 0..2 * k {
        sigma[(i, i)] += ch;
    }
    Ok(sigma)
}

/// Cross-check route: `1/2 log det sigma`.
pub fn renyi2_cov<R: Real>(
    u: &ComplexMatrix<R>,
    gamma: &Subsystem,
    s: R,
) -> Result<EntropyResult<R>> {
    check_squeezing(s)?;
    let sigma = reduced_covariance(u, gamma, s)?;
    Ok(EntropyResult {
        value: R::lit(0.5) * logdet_spd_real(&sigma)?,
        route: Route::Cov,
        spectrum: Vec::new(),
        series_terms: None,
    })
}

/// Diagnostic route: `sum_{l=1}^{L} tanh^{2l}(2s) / (2l) (|G| - Tr W^l)` from powers of `W`.
pub fn renyi2_series<R: Real>(
    u: &ComplexMatrix<R>,
    gamma: &Subsystem,
    s: R,
    max_terms: usize,
) -> Result<EntropyResult<R>> {
    check_squeezing(s)?;
    if max_terms == 0 {
        return Err(Error::InvalidArgument(
            "series needs at least one term".into(),
        ));
    }
    let w = build_w(u, gamma)?;
    let k = R::from_usize(gamma.len()).expect("subsystem size");
    let t2 = (R::lit(2.0) * s).tanh().powi(2);
    let mut power = w.clone();
    let mut coeff = R::one();
    let mut value = R::zero();
    for l in 1..=max_terms {
        coeff *= t2;
        let trace = power.trace().re;
        // Tr W^l <= |G| holds exactly; roundoff may push it a hair above.
        let gap = (k - trace).max(R::zero());
        value += coeff / R::from_usize(2 * l).expect("term index") * gap;
        if l < max_terms {
            power = &power * &w;
        }
    }
    Ok(EntropyResult {
        value,
        route: Route::Series,
        spectrum: Vec::new(),
        series_terms: Some(max_terms),
    })
}

/// `|G| log cosh 2s`.
pub fn trivial_bound<R: Real>(k: usize, s: R) -> R {
    R::from_usize(k).expect("subsystem size") * (R::lit(2.0) * s).cosh().ln()
}

/// Modes `x` in `G` coupled by a nonzero `(U U^T)_{xy}` to some `y` outside `G`.
pub fn uut_boundary<R: Real>(u: &ComplexMatrix<R>, gamma: &Subsystem) -> Result<Vec<usize>> {
    let n = ensure_square(u)?;
    gamma.check_fits(n)?;
    let rows = gamma_rows(u, gamma) * u.transpose();
    let tol = R::lit(ZERO_ENTRY_TOL);
    Ok(gamma
        .modes()
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            (0..n).any(|y| !gamma.contains(y) && rows[(i, y)].norm_sqr().sqrt() > tol)
        })
        .map(|(_, &x)| x)
        .collect())
}

/// Boundary area `A_G` of a corner box `{x : x_j <= k_j}` in a D-dimensional brickwork,
/// or `None` if `G` is not such a box.
pub fn brickwork_box_area(m: usize, dim: usize, gamma: &Subsystem) -> Option<usize> {
    let mut extent = vec![0; dim];
    for &x in gamma.modes() {
        for (e, c) in extent.iter_mut().zip(brickwork_coords(m, dim, x)) {
            *e = (*e).max(c);
        }
    }
    let volume: usize = extent.iter().product();
    if volume != gamma.len() {
        return None;
    }
    Some(
        (0..dim)
            .filter(|&j| extent[j] < m)
            .map(|j| {
                (0..dim)
                    .filter(|&l| l != j)
                    .map(|l| extent[l])
                    .product::<usize>()
            })
            .sum(),
    )
}

/// An entropy together with every light-cone bound that applies to its circuit.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport<R: Real> {
    pub s2: R,
    /// `|G| log cosh 2s`.
    pub trivial: R,
    pub trivial_ok: bool,
    /// `4 d log cosh 2s` for a brickwall prefix `{1..k}`, `4 d A_G log cosh 2s` for a
    /// brickwork corner box.
    pub light_cone: Option<R>,
    pub light_cone_ok: Option<bool>,
    /// `|boundary| log cosh 2s` from the zero pattern of `U U^T`.
    pub boundary: R,
    pub boundary_size: usize,
    pub boundary_ok: bool,
}

impl<R: Real> BoundReport<R> {
    pub fn all_ok(&self) -> bool {
        self.trivial_ok && self.boundary_ok && self.light_cone_ok.unwrap_or(true)
    }
}

pub fn check_bounds<R: Real>(
    sample: &CircuitSample<R>,
    gamma: &Subsystem,
    s: R,
) -> Result<BoundReport<R>> {
    let s2 = renyi2_eig(&sample.u, gamma, s)?.value;
    let lc = (R::lit(2.0) * s).cosh().ln();
    let slack = R::lit(BOUND_SLACK);
    let depth = R::from_usize(sample.depth).expect("depth");
    let light_cone = match sample.geometry.label() {
        GeometryLabel::Brickwall1d if gamma.is_prefix() => Some(R::lit(4.0) * depth * lc),
        GeometryLabel::Brickwall1d => None,
        GeometryLabel::BrickworkD { m, dim, .. } => brickwork_box_area(*m, *dim, gamma)
            .map(|area| R::lit(4.0) * depth * R::from_usize(area).expect("area") * lc),
        GeometryLabel::Custom => None,
    };
    let boundary_size = uut_boundary(&sample.u, gamma)?.len();
    let boundary = R::from_usize(boundary_size).expect("boundary size") * lc;
    let trivial = trivial_bound(gamma.len(), s);
    Ok(BoundReport {
        s2,
        trivial,
        trivial_ok: s2 <= trivial + slack,
        light_cone,
        light_cone_ok: light_cone.map(|b| s2 <= b + slack),
        boundary,
        boundary_size,
        boundary_ok: s2 <= boundary + slack,
    })
}

/// `2 sqrt(k) sinh^2(2s)`, the Hilbert-Schmidt Lipschitz constant of `U -> S_2(U)`.
pub fn lipschitz_constant<R: Real>(k: usize, s: R) -> R {
    R::lit(2.0) * R::from_usize(k).expect("k").sqrt() * (R::lit(2.0) * s).sinh().powi(2)
}

/// Nearest unitary (polar factor) of a square matrix.
pub fn nearest_unitary<R: Real>(a: &ComplexMatrix<R>) -> Result<ComplexMatrix<R>> {
    ensure_square(a)?;
    let svd = a.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::InvalidArgument("SVD failed".into())),
    }
}
