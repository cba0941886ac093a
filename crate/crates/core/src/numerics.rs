//! Dense complex linear-algebra primitives shared by every other module.

use nalgebra::DMatrix;

use crate::{Complex, ComplexMatrix, Error, Real, RealMatrix, Result};

/// Eigenvalues of `W = V V^dagger` closer than this to `[0, 1]` are clamped into it.
pub const SPECTRUM_CLAMP_TOL: f64 = 1e-9;

pub(crate) fn ensure_square<T>(m: &DMatrix<T>) -> Result<usize> {
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        Ok(m.nrows())
    } else {
        Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn all_finite<R: Real>(a: &ComplexMatrix<R>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm<R: Real>(a: &ComplexMatrix<R>) -> R {
    a.iter().fold(R::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// `||U^dagger U - I||_hs`.
pub fn unitarity_defect<R: Real>(u: &ComplexMatrix<R>) -> Result<R> {
    let n = ensure_square(u)?;
    let mut g = u.adjoint() * u;
    for i in 0..n {
        g[(i, i)] -= Complex::new(R::one(), R::zero());
    }
    Ok(hs_norm(&g))
}

/// Real eigenvalues of the Hermitian part `(H + H^dagger) / 2`, ascending.
///
/// Fails if `||H - H^dagger||_hs > tol * ||H||_hs`.
pub fn hermitian_eigenvalues<R: Real>(h: &ComplexMatrix<R>, tol: R) -> Result<Vec<R>> {
    ensure_square(h)?;
    let adj = h.adjoint();
    let defect = hs_norm(&(h - &adj));
    let scale = hs_norm(h);
    if defect > tol * scale {
        return Err(Error::NotHermitian {
            defect: defect.as_f64(),
            tol: (tol * scale).as_f64(),
        });
    }
    let half = Complex::new(R::lit(0.5), R::zero());
    let herm = (h + adj) * half;
    let mut eig: Vec<R> = herm.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(eig)
}

/// Clamp a spectrum into `[0, 1]`; values further than `tol` outside abort.
pub fn clamp_unit_interval<R: Real>(spectrum: &mut [R], tol: R) -> Result<()> {
    let out = spectrum
        .iter()
        .position(|&l| l < -tol || l > R::one() + tol);
    if let Some(index) = out {
        return Err(Error::SpectrumOutOfRange {
            value: spectrum[index].as_f64(),
            index,
            spectrum: spectrum.iter().map(|l| l.as_f64()).collect(),
        });
    }
    for l in spectrum.iter_mut() {
        *l = l.clamp(R::zero(), R::one());
    }
    Ok(())
}

/// `log det S` for a real-symmetric positive definite matrix given as complex entries.
///
/// Imaginary parts and asymmetry must be below `1e-10` relative to `||S||_hs`.
pub fn logdet_spd<R: Real>(s: &ComplexMatrix<R>) -> Result<R> {
    let n = ensure_square(s)?;
    let tol = R::lit(1e-10) * hs_norm(s).max(R::one());
    let mut real = RealMatrix::<R>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let z = s[(i, j)];
            if z.im.abs() > tol || (z - s[(j, i)]).norm_sqr().sqrt() > tol {
                return Err(Error::NotRealSymmetric { tol: tol.as_f64() });
            }
            real[(i, j)] = z.re;
        }
    }
    logdet_spd_real(&real)
}

/// `log det S` via Cholesky: twice the sum of logs of the pivots.
pub fn logdet_spd_real<R: Real>(s: &RealMatrix<R>) -> Result<R> {
    let n = ensure_square(s)?;
    let mut l = RealMatrix::<R>::zeros(n, n);
    let mut logdet = R::zero();
    for j in 0..n {
        let mut diag = s[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > R::zero()) {
            return Err(Error::NotPositiveDefinite);
        }
        let pivot = diag.sqrt();
        l[(j, j)] = pivot;
        logdet += R::lit(2.0) * pivot.ln();
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / pivot;
        }
    }
    Ok(logdet)
}

pub fn identity<R: Real>(n: usize) -> ComplexMatrix<R> {
    ComplexMatrix::<R>::identity(n, n)
}
