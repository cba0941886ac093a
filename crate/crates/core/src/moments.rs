//! Monte Carlo estimators for second and fourth moments of circuit entries.
//!
//! All targets for one `(geometry, depth)` are estimated from one shared set of circuit
//! samples, so identities between them can be tested on paired differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaussian::{renyi2_eig, Subsystem};
use crate::geometry::GeometrySpec;
use crate::sampler::{haar_unitary, sample_circuit, RngStream};
use crate::{CMatrix, Error, RMatrix, Result};

/// Trials per work unit. Fixed so that results do not depend on the thread count.
pub const CHUNK_TRIALS: u64 = 256;

/// Mergeable running mean and variance (Welford / Chan).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStat {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStat) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / total as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.count as f64 * w;
        self.count = total;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `E[|U_{ax}|^2 |U_{ay}|^2]`: two entries in one row `a`.
    Rows,
    /// `E[|U_{xa}|^2 |U_{ya}|^2]`: two entries in one column `a`.
    Cols,
}

/// Which expectation an estimate refers to (0-based indices).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentTarget {
    Second {
        x: usize,
        y: usize,
    },
    Fourth {
        side: Side,
        alpha: usize,
        x: usize,
        y: usize,
    },
    UutSecond {
        x: usize,
        y: usize,
    },
    /// `sum_a |U_{xa}|^2 |U_{ya}|^2 - |(U U^T)_{xy}|^2`, zero in expectation.
    UutIdentityGap {
        x: usize,
        y: usize,
    },
    HaarEntropy {
        n: usize,
        k: usize,
        s: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub target: MomentTarget,
}

impl MomentEstimate {
    fn from_stat(stat: &RunningStat, target: MomentTarget) -> Self {
        MomentEstimate {
            value: stat.mean,
            stderr: stat.stderr(),
            trials: stat.count,
            target,
        }
    }

    /// `(value - exact) / stderr`; 0 when both the gap and the stderr vanish.
    pub fn z_score(&self, exact: f64) -> f64 {
        let gap = self.value - exact;
        if self.stderr > 0.0 {
            gap / self.stderr
        } else if gap.abs() <= 1e-12 {
            0.0
        } else {
            gap.signum() * f64::INFINITY
        }
    }
}

/// Which tables to accumulate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Collect {
    pub second: bool,
    pub fourth: bool,
    pub uut: bool,
}

impl Collect {
    pub const ALL: Collect = Collect {
        second: true,
        fourth: true,
        uut: true,
    };
}

/// Where samples come from.
#[derive(Clone, Debug)]
pub enum Source<'a> {
    Circuit {
        geometry: &'a GeometrySpec,
        depth: usize,
    },
    Haar {
        n: usize,
    },
}

impl Source<'_> {
    fn n(&self) -> usize {
        match self {
            Source::Circuit { geometry, .. } => geometry.n(),
            Source::Haar { n } => *n,
        }
    }

    fn draw(&self, stream: RngStream) -> Result<CMatrix> {
        match self {
            Source::Circuit { geometry, depth } => {
                Ok(sample_circuit::<f64>(geometry, *depth, stream)?.u)
            }
            Source::Haar { n } => haar_unitary(*n, &mut stream.rng()),
        }
    }
}

fn stats(len: usize, on: bool) -> Vec<RunningStat> {
    if on {
        vec![RunningStat::default(); len]
    } else {
        Vec::new()
    }
}

/// Shared-sample moment tables; all index math is 0-based and row-major.
#[derive(Clone, Debug)]
pub struct MomentTables {
    pub n: usize,
    pub trials: u64,
    /// `|U_{xy}|^2` at `x * n + y`.
    second: Vec<RunningStat>,
    /// `|U_{ax}|^2 |U_{ay}|^2` at `(a * n + x) * n + y`.
    fourth_rows: Vec<RunningStat>,
    /// `|U_{xa}|^2 |U_{ya}|^2` at `(a * n + x) * n + y`.
    fourth_cols: Vec<RunningStat>,
    /// `|(U U^T)_{xy}|^2`.
    uut_sq: Vec<RunningStat>,
    /// `|(U U^T)_{xy}|`.
    uut_abs: Vec<RunningStat>,
    /// Paired difference for the fourth-moment identity.
    identity_gap: Vec<RunningStat>,
}

impl MomentTables {
    fn empty(n: usize, collect: Collect) -> Self {
        let (n2, n3) = (n * n, n * n * n);
        MomentTables {
            n,
            trials: 0,
            second: stats(n2, collect.second),
            fourth_rows: stats(n3, collect.fourth),
            fourth_cols: stats(n3, collect.fourth),
            uut_sq: stats(n2, collect.uut),
            uut_abs: stats(n2, collect.uut),
            identity_gap: stats(n2, collect.uut && collect.fourth),
        }
    }

    fn push(&mut self, u: &CMatrix) {
        let n = self.n;
        self.trials += 1;
        let a = RMatrix::from_fn(n, n, |i, j| u[(i, j)].norm_sqr());
        if !self.second.is_empty() {
            for x in 0..n {
                for y in 0..n {
                    self.second[x * n + y].push(a[(x, y)]);
                }
            }
        }
        if !self.fourth_rows.is_empty() {
            for al in 0..n {
                for x in 0..n {
                    for y in 0..n {
                        let idx = (al * n + x) * n + y;
                        self.fourth_rows[idx].push(a[(al, x)] * a[(al, y)]);
                        self.fourth_cols[idx].push(a[(x, al)] * a[(y, al)]);
                    }
                }
            }
        }
        if !self.uut_sq.is_empty() {
            let uut = u * u.transpose();
            for x in 0..n {
                for y in 0..n {
                    let z = uut[(x, y)];
                    self.uut_sq[x * n + y].push(z.norm_sqr());
                    self.uut_abs[x * n + y].push(z.norm());
                    if !self.identity_gap.is_empty() {
                        let sum: f64 = (0..n).map(|al| a[(x, al)] * a[(y, al)]).sum();
                        self.identity_gap[x * n + y].push(sum - z.norm_sqr());
                    }
                }
            }
        }
    }

    fn merge(&mut self, other: &MomentTables) {
        self.trials += other.trials;
        let pairs = [
            (&mut self.second, &other.second),
            (&mut self.fourth_rows, &other.fourth_rows),
            (&mut self.fourth_cols, &other.fourth_cols),
            (&mut self.uut_sq, &other.uut_sq),
            (&mut self.uut_abs, &other.uut_abs),
            (&mut self.identity_gap, &other.identity_gap),
        ];
        for (mine, theirs) in pairs {
            for (m, t) in mine.iter_mut().zip(theirs) {
                m.merge(t);
            }
        }
    }

    fn pick(table: &[RunningStat], idx: usize, what: &str) -> Result<RunningStat> {
        table.get(idx).copied().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{what} moments were not collected or index out of range"
            ))
        })
    }

    pub fn second(&self, x: usize, y: usize) -> Result<MomentEstimate> {
        self.check(&[x, y])?;
        let s = Self::pick(&self.second, x * self.n + y, "second")?;
        Ok(MomentEstimate::from_stat(&s, MomentTarget::Second { x, y }))
    }

    pub fn fourth(&self, side: Side, alpha: usize, x: usize, y: usize) -> Result<MomentEstimate> {
        self.check(&[alpha, x, y])?;
        let idx = (alpha * self.n + x) * self.n + y;
        let table = match side {
            Side::Rows => &self.fourth_rows,
            Side::Cols => &self.fourth_cols,
        };
        let s = Self::pick(table, idx, "fourth")?;
        Ok(MomentEstimate::from_stat(
            &s,
            MomentTarget::Fourth { side, alpha, x, y },
        ))
    }

    pub fn uut_second(&self, x: usize, y: usize) -> Result<MomentEstimate> {
        self.check(&[x, y])?;
        let s = Self::pick(&self.uut_sq, x * self.n + y, "UU^T")?;
        Ok(MomentEstimate::from_stat(
            &s,
            MomentTarget::UutSecond { x, y },
        ))
    }

    pub fn identity_gap(&self, x: usize, y: usize) -> Result<MomentEstimate> {
        self.check(&[x, y])?;
        let s = Self::pick(&self.identity_gap, x * self.n + y, "identity")?;
        Ok(MomentEstimate::from_stat(
            &s,
            MomentTarget::UutIdentityGap { x, y },
        ))
    }

    /// Mean `|(U U^T)_{xy}|` over all trials.
    pub fn mean_abs_uut(&self) -> Result<RMatrix> {
        if self.uut_abs.is_empty() {
            return Err(Error::InvalidArgument(
                "UU^T moments were not collected".into(),
            ));
        }
        Ok(RMatrix::from_fn(self.n, self.n, |x, y| {
            self.uut_abs[x * self.n + y].mean
        }))
    }

    fn check(&self, idx: &[usize]) -> Result<()> {
        match idx.iter().find(|&&i| i >= self.n) {
            Some(i) => Err(Error::InvalidArgument(format!(
                "mode index {i} out of range for {} modes",
                self.n
            ))),
            None => Ok(()),
        }
    }
}

fn chunks(trials: u64) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    let count = trials.div_ceil(CHUNK_TRIALS) as usize;
    (0..count).into_par_iter().map(move |c| {
        let lo = c as u64 * CHUNK_TRIALS;
        (lo, (lo + CHUNK_TRIALS).min(trials))
    })
}

fn check_trials(trials: u64, min: u64) -> Result<()> {
    if trials < min {
        Err(Error::InvalidArgument(format!(
            "need at least {min} trials, got {trials}"
        )))
    } else {
        Ok(())
    }
}

/// Runs `trials` samples (trial `t` uses `stream.derive(&[t])`) and accumulates the
/// requested tables. Parallel over fixed chunks, merged in chunk order.
pub fn estimate_moments(
    source: &Source<'_>,
    trials: u64,
    stream: RngStream,
    collect: Collect,
) -> Result<MomentTables> {
    check_trials(trials, 1)?;
    let n = source.n();
    let parts: Vec<Result<MomentTables>> = chunks(trials)
        .map(|(lo, hi)| {
            let mut acc = MomentTables::empty(n, collect);
            for t in lo..hi {
                let u = source
                    .draw(stream.derive(&[t]))
                    .map_err(|e| e.in_trial(t))?;
                acc.push(&u);
            }
            Ok(acc)
        })
        .collect();
    let mut total = MomentTables::empty(n, collect);
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

fn circuit<'a>(geometry: &'a GeometrySpec, depth: usize) -> Source<'a> {
    Source::Circuit { geometry, depth }
}

/// `E|U_{xy}|^2`.
pub fn second_moment(
    geometry: &GeometrySpec,
    d: usize,
    x: usize,
    y: usize,
    trials: u64,
    stream: RngStream,
) -> Result<MomentEstimate> {
    check_trials(trials, 2)?;
    let collect = Collect {
        second: true,
        ..Collect::default()
    };
    estimate_moments(&circuit(geometry, d), trials, stream, collect)?.second(x, y)
}

/// `E[|U_{ax}|^2 |U_{ay}|^2]` (rows) or `E[|U_{xa}|^2 |U_{ya}|^2]` (cols).
#[allow(clippy::too_many_arguments)]
pub fn fourth_moment(
    geometry: &GeometrySpec,
    d: usize,
    alpha: usize,
    x: usize,
    y: usize,
    side: Side,
    trials: u64,
    stream: RngStream,
) -> Result<MomentEstimate> {
    check_trials(trials, 2)?;
    let collect = Collect {
        fourth: true,
        ..Collect::default()
    };
    estimate_moments(&circuit(geometry, d), trials, stream, collect)?.fourth(side, alpha, x, y)
}

/// `E|(U U^T)_{xy}|^2`.
pub fn uut_second_moment(
    geometry: &GeometrySpec,
    d: usize,
    x: usize,
    y: usize,
    trials: u64,
    stream: RngStream,
) -> Result<MomentEstimate> {
    check_trials(trials, 2)?;
    let collect = Collect {
        uut: true,
        ..Collect::default()
    };
    estimate_moments(&circuit(geometry, d), trials, stream, collect)?.uut_second(x, y)
}

/// Mean `|U U^T|` matrix, for heatmaps.
pub fn uut_heatmap(
    geometry: &GeometrySpec,
    d: usize,
    trials: u64,
    stream: RngStream,
) -> Result<RMatrix> {
    check_trials(trials, 2)?;
    let collect = Collect {
        uut: true,
        ..Collect::default()
    };
    estimate_moments(&circuit(geometry, d), trials, stream, collect)?.mean_abs_uut()
}

/// Mean and stderr of `S_2` over Haar-random unitaries.
pub fn haar_reference(
    n: usize,
    gamma: &Subsystem,
    s: f64,
    trials: u64,
    stream: RngStream,
) -> Result<MomentEstimate> {
    check_trials(trials, 2)?;
    let parts: Vec<Result<RunningStat>> = chunks(trials)
        .map(|(lo, hi)| {
            let mut stat = RunningStat::default();
            for t in lo..hi {
                let u: CMatrix = haar_unitary(n, &mut stream.derive(&[t]).rng())?;
                let v = renyi2_eig(&u, gamma, s).map_err(|e| e.in_trial(t))?.value;
                stat.push(v);
            }
            Ok(stat)
        })
        .collect();
    let mut total = RunningStat::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(MomentEstimate::from_stat(
        &total,
        MomentTarget::HaarEntropy {
            n,
            k: gamma.len(),
            s,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::trivial_bound;
    use crate::geometry::brickwall_geometry;

    #[test]
    fn running_stat_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = RunningStat::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut parts = RunningStat::default();
        for chunk in xs.chunks(77) {
            let mut p = RunningStat::default();
            chunk.iter().for_each(|&x| p.push(x));
            parts.merge(&p);
        }
        assert!((all.mean - parts.mean).abs() < 1e-12);
        assert!((all.variance() - parts.variance()).abs() < 1e-9);
        let mean = xs.iter().sum::<f64>() / 1000.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((all.variance() - var).abs() < 1e-9);
    }

    #[test]
    fn depth_zero_is_deterministic() {
        let g = brickwall_geometry(4).unwrap();
        let t = estimate_moments(&circuit(&g, 0), 10, RngStream::new(1), Collect::ALL).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let e = t.second(x, y).unwrap();
                assert_eq!(e.value, if x == y { 1.0 } else { 0.0 });
                assert_eq!(e.stderr, 0.0);
                let u = t.uut_second(x, y).unwrap();
                assert_eq!(u.value, if x == y { 1.0 } else { 0.0 });
                for al in 0..4 {
                    let f = t.fourth(Side::Rows, al, x, y).unwrap();
                    assert_eq!(f.value, if al == x && al == y { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn rows_and_columns_sum_to_one() {
        let g = brickwall_geometry(6).unwrap();
        let t = estimate_moments(&circuit(&g, 3), 4000, RngStream::new(2), Collect::ALL).unwrap();
        for y in 0..6 {
            let (mut sum, mut var) = (0.0, 0.0);
            for x in 0..6 {
                let e = t.second(x, y).unwrap();
                sum += e.value;
                var += e.stderr * e.stderr;
            }
            // Column sums are exactly 1 per sample, so the estimate is exact up to roundoff.
            assert!((sum - 1.0).abs() <= 5.0 * var.sqrt() + 1e-12);
        }
        for al in 0..6 {
            for x in 0..6 {
                for y in 0..x {
                    let a = t.fourth(Side::Rows, al, x, y).unwrap();
                    let b = t.fourth(Side::Rows, al, y, x).unwrap();
                    assert!((a.value - b.value).abs() <= 5.0 * a.stderr.max(1e-15));
                }
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let g = brickwall_geometry(6).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    estimate_moments(&circuit(&g, 4), 1000, RngStream::new(3), Collect::ALL)
                        .unwrap()
                        .mean_abs_uut()
                        .unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn haar_fourth_moment_matches_weingarten() {
        // E|U_ax|^2 |U_ay|^2 = 1/(n(n+1)) for x != y and 2/(n(n+1)) for x == y.
        let n = 8usize;
        let t =
            estimate_moments(&Source::Haar { n }, 20_000, RngStream::new(4), Collect::ALL).unwrap();
        let off = 1.0 / (n * (n + 1)) as f64;
        let e = t.fourth(Side::Rows, 0, 1, 2).unwrap();
        assert!(e.z_score(off).abs() <= 5.0, "{e:?}");
        let e = t.fourth(Side::Cols, 3, 5, 5).unwrap();
        assert!(e.z_score(2.0 * off).abs() <= 5.0, "{e:?}");
    }

    #[test]
    fn haar_reference_cases() {
        let g1 = Subsystem::first(1, 2).unwrap();
        let zero = haar_reference(2, &g1, 0.0, 10, RngStream::new(5)).unwrap();
        assert_eq!((zero.value, zero.stderr), (0.0, 0.0));
        let e = haar_reference(2, &g1, 1.0, 500, RngStream::new(6)).unwrap();
        assert!(e.value > 0.0 && e.value <= trivial_bound(1, 1.0));
        assert!(haar_reference(2, &g1, 1.0, 1, RngStream::new(6)).is_err());
    }

    #[test]
    fn wrappers_and_errors() {
        let g = brickwall_geometry(4).unwrap();
        let e = second_moment(&g, 0, 1, 1, 4, RngStream::new(7)).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(second_moment(&g, 0, 1, 1, 1, RngStream::new(7)).is_err());
        assert!(second_moment(&g, 0, 9, 1, 4, RngStream::new(7)).is_err());
        let f = fourth_moment(&g, 0, 2, 2, 2, Side::Cols, 4, RngStream::new(7)).unwrap();
        assert_eq!(f.value, 1.0);
        let u = uut_second_moment(&g, 0, 0, 1, 4, RngStream::new(7)).unwrap();
        assert_eq!(u.value, 0.0);
        let t =
            estimate_moments(&circuit(&g, 1), 4, RngStream::new(7), Collect::default()).unwrap();
        assert!(t.second(0, 0).is_err());
    }
}
