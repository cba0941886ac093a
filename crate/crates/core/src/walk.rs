//! Classical lazy walks attached to circuit geometries.
//!
//! A layer with pairing `pi` becomes the kernel `S^pi`: a walker on a paired mode stays
//! or hops to its partner with probability 1/2 each. One circuit step gives
//! `P = S^(pi_1) S^(pi_2) ... S^(pi_M)`, and `E|U_{xy}|^2 = P^d(y, x)`.
//!
//! Modes are 0-based in this API. CSV output converts to 1-based.

use nalgebra::DMatrix;
use num_rational::Rational64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{GeometrySpec, Pairing};
use crate::moments::{estimate_moments, Collect, MomentEstimate, Source};
use crate::sampler::RngStream;
use crate::{Error, KernelScalar, Result};

/// Row drift above which kernel powers are renormalized.
pub const RENORM_TOL: f64 = 1e-12;
/// Trials per pair-walk work unit.
pub const WALK_CHUNK: u64 = 1 << 14;

/// Step matrix of the walk for one circuit step, with its layer factors.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkKernel<T: KernelScalar> {
    pub n: usize,
    pub p: DMatrix<T>,
    pub factors: Vec<DMatrix<T>>,
}

fn matmul<T: KernelScalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (r, k, c) = (a.nrows(), a.ncols(), b.ncols());
    DMatrix::from_fn(r, c, |i, j| {
        (0..k).fold(T::zero(), |acc, l| {
            acc + a[(i, l)].clone() * b[(l, j)].clone()
        })
    })
}

/// `S^pi`: identity on singletons, a 2x2 block of halves on each pair.
pub fn layer_kernel<T: KernelScalar>(pairing: &Pairing) -> DMatrix<T> {
    let n = pairing.n();
    DMatrix::from_fn(n, n, |x, y| {
        let p = pairing.partner(x);
        if p == x {
            if y == x {
                T::one()
            } else {
                T::zero()
            }
        } else if y == x || y == p {
            T::half()
        } else {
            T::zero()
        }
    })
}

/// Ordered product of the layer kernels of one step.
pub fn step_kernel<T: KernelScalar>(geometry: &GeometrySpec) -> WalkKernel<T> {
    let factors: Vec<DMatrix<T>> = geometry.layers().iter().map(layer_kernel).collect();
    let n = geometry.n();
    let p = factors
        .iter()
        .fold(DMatrix::identity(n, n), |acc, f| matmul(&acc, f));
    WalkKernel { n, p, factors }
}

impl<T: KernelScalar> WalkKernel<T> {
    /// Kernel of the same layers in reverse order.
    pub fn reversed(&self) -> WalkKernel<T> {
        let factors: Vec<DMatrix<T>> = self.factors.iter().rev().cloned().collect();
        let p = factors
            .iter()
            .fold(DMatrix::identity(self.n, self.n), |acc, f| matmul(&acc, f));
        WalkKernel {
            n: self.n,
            p,
            factors,
        }
    }

    pub fn row(&self, y: usize) -> Vec<T> {
        self.p.row(y).iter().cloned().collect()
    }
}

impl WalkKernel<f64> {
    /// Largest deviation of any row or column sum from 1.
    pub fn stochastic_defect(&self) -> f64 {
        let rows = self.p.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.p.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// `P(y -> x)` for the brickwall walk written case by case (1-based, `n` even).
pub fn brickwall_transition(n: usize, y: usize, x: usize) -> Rational64 {
    let boundary = |z: usize| z == 1 || z == n;
    if (x == 1 && (y == 1 || y == 2)) || (x == n && (y + 1 == n || y == n)) {
        return Rational64::new(1, 2);
    }
    let (y, xi) = (y as i64, x as i64);
    let window = if y % 2 == 1 {
        y - 1..=y + 2
    } else {
        y - 2..=y + 1
    };
    if window.contains(&xi) && !boundary(x) {
        Rational64::new(1, 4)
    } else {
        Rational64::from_integer(0)
    }
}

fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > RENORM_TOL {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// `v <- v P`.
fn step_row(v: &[f64], p: &DMatrix<f64>) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for (y, &w) in v.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (x, o) in out.iter_mut().enumerate() {
            *o += w * p[(y, x)];
        }
    }
    out
}

/// Row `start` of `P^d`.
pub fn walk_distribution(kernel: &WalkKernel<f64>, start: usize, d: usize) -> Result<Vec<f64>> {
    if start >= kernel.n {
        return Err(Error::InvalidArgument(format!(
            "start mode {start} out of range for {} modes",
            kernel.n
        )));
    }
    let mut v = vec![0.0; kernel.n];
    v[start] = 1.0;
    for _ in 0..d {
        v = step_row(&v, &kernel.p);
        renormalize(&mut v);
    }
    Ok(v)
}

/// Row `start` of `P^d` in exact arithmetic.
pub fn walk_distribution_exact(
    kernel: &WalkKernel<Rational64>,
    start: usize,
    d: usize,
) -> Vec<Rational64> {
    let n = kernel.n;
    let mut v = vec![Rational64::from_integer(0); n];
    v[start] = Rational64::from_integer(1);
    for _ in 0..d {
        v = (0..n)
            .map(|x| (0..n).map(|y| v[y] * kernel.p[(y, x)]).sum())
            .collect();
    }
    v
}

/// Half the l1 distance.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    for v in [p, q] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probability vector sums to {s}"
            )));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn max_tv_to_uniform(q: &DMatrix<f64>) -> f64 {
    let u = 1.0 / q.nrows() as f64;
    q.row_iter()
        .map(|r| 0.5 * r.iter().map(|x| (x - u).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Worst-start TV distance to uniform for `t = 0..`, stopping after `t_max` or once the
/// value is at most `stop_below`.
pub fn mixing_curve(kernel: &WalkKernel<f64>, t_max: usize, stop_below: f64) -> Vec<f64> {
    let n = kernel.n;
    let mut q = DMatrix::<f64>::identity(n, n);
    let mut curve = Vec::new();
    for t in 0..=t_max {
        let tv = max_tv_to_uniform(&q);
        curve.push(tv);
        if tv <= stop_below || t == t_max {
            break;
        }
        q = &q * &kernel.p;
        for mut row in q.row_iter_mut() {
            let s = row.sum();
            if (s - 1.0).abs() > RENORM_TOL {
                row /= s;
            }
        }
    }
    curve
}

/// Smallest `t <= t_max` with worst-start TV distance to uniform at most `epsilon`.
pub fn mixing_time_kernel(
    kernel: &WalkKernel<f64>,
    epsilon: f64,
    t_max: usize,
) -> Result<Option<usize>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if t_max < 1 {
        return Err(Error::InvalidArgument("t_max must be at least 1".into()));
    }
    let curve = mixing_curve(kernel, t_max, epsilon);
    Ok(curve.iter().position(|&tv| tv <= epsilon))
}

pub fn mixing_time(geometry: &GeometrySpec, epsilon: f64, t_max: usize) -> Result<Option<usize>> {
    mixing_time_kernel(&step_kernel(geometry), epsilon, t_max)
}

/// `R(x)` on 1-based positions: fold `Z` onto `1..=n` by reflection.
pub fn reflect_map(x: i64, n: usize) -> usize {
    let two_n = 2 * n as i64;
    let r = (x - 1).rem_euclid(two_n) + 1;
    if r <= n as i64 {
        r as usize
    } else {
        (two_n + 1 - r) as usize
    }
}

/// One step of the walk on `Z` that the brickwall walk reflects.
pub fn z_walk_step<G: Rng + ?Sized>(y: i64, rng: &mut G) -> i64 {
    let offset = rng.random_range(0..4i64);
    if y.rem_euclid(2) == 1 {
        y - 1 + offset
    } else {
        y - 2 + offset
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReflectionReport {
    pub n: usize,
    pub d: usize,
    /// 1-based start.
    pub start: usize,
    pub trials: u64,
    pub empirical: Vec<f64>,
    pub exact: Vec<f64>,
    pub tv_gap: f64,
    /// `1/2 sum_x sqrt(p_x (1 - p_x) / N)`, the expected TV gap scale.
    pub stat_bound: f64,
    pub pass: bool,
}

/// Histogram of `R(S_d)` over `trials` runs of the `Z` walk started at `start` (1-based).
pub fn reflected_histogram(
    n: usize,
    d: usize,
    start: usize,
    trials: u64,
    stream: RngStream,
) -> Vec<u64> {
    let chunks = trials.div_ceil(WALK_CHUNK);
    let parts: Vec<Vec<u64>> = (0..chunks as usize)
        .into_par_iter()
        .map(|c| {
            let c = c as u64;
            let mut rng = stream.derive(&[c]).rng();
            let mut hist = vec![0u64; n];
            let hi = ((c + 1) * WALK_CHUNK).min(trials);
            for _ in c * WALK_CHUNK..hi {
                let mut s = start as i64;
                for _ in 0..d {
                    s = z_walk_step(s, &mut rng);
                }
                hist[reflect_map(s, n) - 1] += 1;
            }
            hist
        })
        .collect();
    let mut hist = vec![0u64; n];
    for part in parts {
        hist.iter_mut().zip(part).for_each(|(h, p)| *h += p);
    }
    hist
}

/// Compares the reflected `Z` walk against the brickwall kernel at time `d`.
pub fn verify_reflection(
    n: usize,
    d: usize,
    start: usize,
    trials: u64,
    stream: RngStream,
) -> Result<ReflectionReport> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("n must be even, got {n}")));
    }
    if start == 0 || start > n || trials == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= start <= n and trials >= 1, got start {start}, trials {trials}"
        )));
    }
    let kernel = step_kernel::<f64>(&crate::geometry::brickwall_geometry(n)?);
    let exact = walk_distribution(&kernel, start - 1, d)?;
    let hist = reflected_histogram(n, d, start, trials, stream);
    let nf = trials as f64;
    let empirical: Vec<f64> = hist.iter().map(|&c| c as f64 / nf).collect();
    let tv_gap = tv_distance(&empirical, &exact)?;
    let stat_bound = 0.5
        * exact
            .iter()
            .map(|p| (p * (1.0 - p) / nf).max(0.0).sqrt())
            .sum::<f64>();
    Ok(ReflectionReport {
        n,
        d,
        start,
        trials,
        empirical,
        exact,
        tv_gap,
        stat_bound,
        pass: tv_gap <= 5.0 * stat_bound + 1e-15,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BosonRwEntry {
    /// 0-based output mode.
    pub x: usize,
    /// 0-based input mode.
    pub y: usize,
    pub estimate: MomentEstimate,
    pub exact: f64,
    pub z: f64,
}

/// Monte Carlo `E|U_{xy}|^2` against `P^d(y, x)` for every pair, on shared samples.
pub fn verify_boson_rw_all(
    geometry: &GeometrySpec,
    d: usize,
    trials: u64,
    stream: RngStream,
) -> Result<Vec<BosonRwEntry>> {
    let kernel = step_kernel::<f64>(geometry);
    let collect = Collect {
        second: true,
        ..Collect::default()
    };
    let tables = estimate_moments(
        &Source::Circuit { geometry, depth: d },
        trials,
        stream,
        collect,
    )?;
    let n = geometry.n();
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        let row = walk_distribution(&kernel, y, d)?;
        for (x, &exact) in row.iter().enumerate() {
            let estimate = tables.second(x, y)?;
            let z = estimate.z_score(exact);
            out.push(BosonRwEntry {
                x,
                y,
                estimate,
                exact,
                z,
            });
        }
    }
    Ok(out)
}

/// Single-pair version of [`verify_boson_rw_all`].
pub fn verify_boson_rw(
    geometry: &GeometrySpec,
    d: usize,
    x: usize,
    y: usize,
    trials: u64,
    stream: RngStream,
) -> Result<BosonRwEntry> {
    let n = geometry.n();
    if x >= n || y >= n {
        return Err(Error::InvalidArgument(format!(
            "mode pair ({x}, {y}) out of range for {n} modes"
        )));
    }
    let all = verify_boson_rw_all(geometry, d, trials, stream)?;
    Ok(all[y * n + x].clone())
}

/// State of two independent walkers at fractional time `substeps / M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairWalkState {
    pub substeps: u64,
    pub pos: (usize, usize),
    pub met: bool,
}

impl PairWalkState {
    pub fn new(x: usize, y: usize) -> Self {
        PairWalkState {
            substeps: 0,
            pos: (x, y),
            met: false,
        }
    }

    /// Applies the next layer to both walkers and records a pi-meeting.
    pub fn advance<G: Rng + ?Sized>(&mut self, layers: &[Pairing], rng: &mut G) {
        let pi = &layers[(self.substeps % layers.len() as u64) as usize];
        self.substeps += 1;
        let (a, b) = self.pos;
        let a2 = if rng.random::<bool>() {
            pi.partner(a)
        } else {
            a
        };
        let b2 = if rng.random::<bool>() {
            pi.partner(b)
        } else {
            b
        };
        self.pos = (a2, b2);
        if pi.same_block(a2, b2) {
            self.met = true;
        }
    }
}

/// Meeting substep `K` (time `K/M`) of a pair started at `(x, y)`, or `None` if the
/// pair has not met after `max_substeps`.
pub fn simulate_meeting<G: Rng + ?Sized>(
    geometry: &GeometrySpec,
    x: usize,
    y: usize,
    max_substeps: u64,
    rng: &mut G,
) -> Option<u64> {
    let mut state = PairWalkState::new(x, y);
    while state.substeps < max_substeps {
        state.advance(geometry.layers(), rng);
        if state.met {
            return Some(state.substeps);
        }
    }
    None
}

#[derive(Clone, Debug, Serialize)]
pub struct PairTail {
    /// 0-based start positions.
    pub start: (usize, usize),
    /// `tail[K] = P[T > K/M]` for `K = 0..=max_substeps`.
    pub tail: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeetingTailReport {
    pub m: usize,
    pub trials: u64,
    pub pairs: Vec<PairTail>,
}

impl MeetingTailReport {
    /// Max over start pairs of the estimated tail at substep `k`.
    pub fn max_tail(&self, k: usize) -> f64 {
        self.pairs.iter().map(|p| p.tail[k]).fold(0.0, f64::max)
    }
}

/// Monte Carlo tails `P[T > K/M]`, `K = 0..=max_substeps`, for every unordered start pair
/// `x < y`. Diagonal starts are omitted: they meet at the first layer.
pub fn meeting_time_tail(
    geometry: &GeometrySpec,
    max_substeps: u64,
    trials: u64,
    stream: RngStream,
) -> Result<MeetingTailReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let n = geometry.n();
    let starts: Vec<(usize, usize)> = (0..n)
        .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
        .collect();
    let len = max_substeps as usize + 1;
    let chunks = trials.div_ceil(WALK_CHUNK);
    let units: Vec<(usize, u64)> = (0..starts.len())
        .flat_map(|i| (0..chunks).map(move |c| (i, c)))
        .collect();
    let hists: Vec<Vec<u64>> = units
        .par_iter()
        .map(|&(i, c)| {
            let (x, y) = starts[i];
            let mut rng = stream.derive(&[x as u64, y as u64, c]).rng();
            // met_at[K] counts runs with T = K; index len means not met.
            let mut met_at = vec![0u64; len + 1];
            let hi = ((c + 1) * WALK_CHUNK).min(trials);
            for _ in c * WALK_CHUNK..hi {
                let k = simulate_meeting(geometry, x, y, max_substeps, &mut rng)
                    .map_or(len, |k| k as usize);
                met_at[k] += 1;
            }
            met_at
        })
        .collect();
    let nf = trials as f64;
    let pairs = starts
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let mut met_at = vec![0u64; len + 1];
            for h in &hists[i * chunks as usize..(i + 1) * chunks as usize] {
                met_at.iter_mut().zip(h).for_each(|(a, b)| *a += b);
            }
            // survived[K] = #{T > K}.
            let mut survived = vec![0u64; len];
            let mut above = met_at[len];
            for k in (0..len).rev() {
                survived[k] = above;
                above += met_at[k];
            }
            let tail: Vec<f64> = survived.iter().map(|&c| c as f64 / nf).collect();
            let stderr = tail.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
            PairTail {
                start,
                tail,
                stderr,
            }
        })
        .collect();
    Ok(MeetingTailReport {
        m: geometry.m(),
        trials,
        pairs,
    })
}

/// Exact meeting tails from backward recursion over pair states.
///
/// `survive(j, g)(z, z') = 0` when `z, z'` share a block of layer `j`, else the average
/// of `g` over the four equally likely moves.
#[derive(Clone, Debug)]
pub struct ExactMeeting {
    n: usize,
    layers: Vec<Pairing>,
}

impl ExactMeeting {
    pub fn new(geometry: &GeometrySpec) -> Self {
        ExactMeeting {
            n: geometry.n(),
            layers: geometry.layers().to_vec(),
        }
    }

    fn survive(&self, j: usize, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        let pi = &self.layers[j];
        let mut out = vec![0.0; n * n];
        for z in 0..n {
            let (z0, z1) = (z, pi.partner(z));
            for w in 0..n {
                if pi.same_block(z, w) {
                    continue;
                }
                let (w0, w1) = (w, pi.partner(w));
                out[z * n + w] =
                    0.25 * (g[z0 * n + w0] + g[z0 * n + w1] + g[z1 * n + w0] + g[z1 * n + w1]);
            }
        }
        out
    }

    /// `A_1 A_2 ... A_r g` with `A_r` applied first.
    fn prefix(&self, r: usize, g: &[f64]) -> Vec<f64> {
        (0..r)
            .rev()
            .fold(g.to_vec(), |acc, j| self.survive(j, &acc))
    }

    /// Tail vectors over all start states for `K = 0..=max_substeps`, evaluated lazily.
    /// Each item is `(K, tails)` with `tails[z * n + w] = P_{(z, w)}[T > K/M]`.
    pub fn tails(&self, max_substeps: u64) -> impl Iterator<Item = (u64, Vec<f64>)> + '_ {
        let m = self.layers.len();
        let ones = vec![1.0; self.n * self.n];
        let mut current: Vec<Vec<f64>> = (0..m).map(|r| self.prefix(r, &ones)).collect();
        (0..=max_substeps).map(move |k| {
            let r = (k % m as u64) as usize;
            let out = current[r].clone();
            // Next time this residue comes up it is one full step later.
            current[r] = self.prefix(m, &current[r]);
            (k, out)
        })
    }

    /// Smallest `K` with worst-start tail at most `epsilon`.
    pub fn meeting_substeps(&self, epsilon: f64, max_substeps: u64) -> Option<u64> {
        self.tails(max_substeps)
            .find(|(_, t)| t.iter().copied().fold(0.0, f64::max) <= epsilon)
            .map(|(k, _)| k)
    }
}

/// `t_meet(epsilon)` in substeps (time `K/M`), by exact recursion.
pub fn meeting_time(geometry: &GeometrySpec, epsilon: f64, max_substeps: u64) -> Option<u64> {
    ExactMeeting::new(geometry).meeting_substeps(epsilon, max_substeps)
}
