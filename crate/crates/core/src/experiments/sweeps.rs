//! Typed computations behind each experiment kind.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::compress::{banded_compress, effective_bandwidth, gate_count_naive};
use crate::gaussian::{check_bounds, renyi2_eig, Subsystem};
use crate::geometry::{brickwall_geometry, GeometrySpec};
use crate::moments::{RunningStat, CHUNK_TRIALS};
use crate::sampler::{sample_circuit, CircuitEvolver, RngStream};
use crate::walk::{mixing_time, ExactMeeting};
use crate::{Error, Result};

/// Runs `f(t)` for `t in 0..trials` over fixed chunks in parallel; results in trial order.
pub(crate) fn map_trials<T, F>(trials: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS) as usize;
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c as u64 * CHUNK_TRIALS;
            let hi = (lo + CHUNK_TRIALS).min(trials);
            (lo..hi).map(|t| f(t).map_err(|e| e.in_trial(t))).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(trials as usize);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthAggregate {
    pub depth: usize,
    pub mean_s2: f64,
    pub var_s2: f64,
    pub stderr_s2: f64,
    pub trials: u64,
}

#[derive(Clone, Debug)]
pub struct EntropySweep {
    pub depths: Vec<usize>,
    /// `per_trial[t][i]` is `S_2` of trial `t` at `depths[i]`.
    pub per_trial: Vec<Vec<f64>>,
    pub aggregates: Vec<DepthAggregate>,
}

impl EntropySweep {
    pub fn aggregate(&self, depth: usize) -> Option<&DepthAggregate> {
        self.aggregates.iter().find(|a| a.depth == depth)
    }

    /// Recomputes each aggregate with a two-pass formula from the per-trial values.
    pub fn check_consistency(&self) -> Result<()> {
        for (i, agg) in self.aggregates.iter().enumerate() {
            let xs: Vec<f64> = self.per_trial.iter().map(|row| row[i]).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = if xs.len() > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let scale = mean.abs().max(1.0);
            if xs.len() as u64 != agg.trials
                || (mean - agg.mean_s2).abs() > 1e-10 * scale
                || (var - agg.var_s2).abs() > 1e-8 * var.max(scale * scale * 1e-6)
            {
                return Err(Error::Inconsistent(format!(
                    "depth {}: aggregate ({}, {}) vs per-trial ({mean}, {var})",
                    agg.depth, agg.mean_s2, agg.var_s2
                )));
            }
        }
        Ok(())
    }
}

/// `S_2` along one circuit per trial, evaluated at each of the increasing `depths`.
pub fn entropy_sweep(
    geometry: &GeometrySpec,
    depths: &[usize],
    gamma: &Subsystem,
    s: f64,
    trials: u64,
    stream: RngStream,
) -> Result<EntropySweep> {
    if depths.is_empty() || depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "depths must be nonempty and strictly increasing".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    gamma.check_fits(geometry.n())?;
    let per_trial = map_trials(trials, |t| {
        let mut ev = CircuitEvolver::<f64>::new(geometry, stream.derive(&[t]));
        depths
            .iter()
            .map(|&d| {
                ev.advance_to(d);
                Ok(renyi2_eig(ev.u(), gamma, s)?.value)
            })
            .collect()
    })?;
    let aggregates = depths
        .iter()
        .enumerate()
        .map(|(i, &depth)| {
            let mut stat = RunningStat::default();
            per_trial
                .iter()
                .for_each(|row: &Vec<f64>| stat.push(row[i]));
            DepthAggregate {
                depth,
                mean_s2: stat.mean,
                var_s2: stat.variance(),
                stderr_s2: stat.stderr(),
                trials: stat.count,
            }
        })
        .collect();
    let sweep = EntropySweep {
        depths: depths.to_vec(),
        per_trial,
        aggregates,
    };
    sweep.check_consistency()?;
    Ok(sweep)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn power_law_exponent(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidArgument(
            "need at least two points with positive coordinates".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Random geometries for the bound audit.
#[derive(Clone, Debug)]
pub enum AuditGeometry {
    /// Brickwall with an even `n` drawn uniformly from `2..=n_max`.
    Brickwall {
        n_max: usize,
    },
    Fixed(GeometrySpec),
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditRow {
    pub trial: u64,
    pub n: usize,
    pub depth: usize,
    pub s: f64,
    pub k: usize,
    pub s2: f64,
    pub trivial: f64,
    pub light_cone: Option<f64>,
    pub boundary: f64,
    pub ok: bool,
}

fn random_subsystem<G: Rng + ?Sized>(geometry: &GeometrySpec, rng: &mut G) -> Result<Subsystem> {
    let n = geometry.n();
    let k = rng.random_range(1..=n);
    // Half the draws use the shape the light-cone bounds are stated for.
    let modes: Vec<usize> = if rng.random::<bool>() {
        match geometry.label() {
            crate::geometry::GeometryLabel::BrickworkD { m, dim, .. } => {
                let ext: Vec<usize> = (0..*dim).map(|_| rng.random_range(1..=*m)).collect();
                (0..n)
                    .filter(|&x| {
                        crate::geometry::brickwork_coords(*m, *dim, x)
                            .iter()
                            .zip(&ext)
                            .all(|(c, e)| c <= e)
                    })
                    .map(|x| x + 1)
                    .collect()
            }
            _ => (1..=k).collect(),
        }
    } else {
        let mut v: Vec<usize> = sample_indices(rng, n, k)
            .into_iter()
            .map(|x| x + 1)
            .collect();
        v.sort_unstable();
        v
    };
    Subsystem::new(n, &modes)
}

/// Samples random circuits, subsystems and squeezings and checks every applicable bound.
pub fn bounds_audit(
    geometry: &AuditGeometry,
    depths: &[usize],
    s_max: f64,
    trials: u64,
    stream: RngStream,
) -> Result<Vec<AuditRow>> {
    if depths.is_empty() {
        return Err(Error::InvalidArgument("depths must be nonempty".into()));
    }
    map_trials(trials, |t| {
        let mut rng = stream.derive(&[t, 0]).rng();
        let g = match geometry {
            AuditGeometry::Brickwall { n_max } => {
                brickwall_geometry(2 * rng.random_range(1..=n_max / 2))?
            }
            AuditGeometry::Fixed(g) => g.clone(),
        };
        let depth = depths[rng.random_range(0..depths.len())];
        let s = s_max * (1.0 - rng.random::<f64>());
        let gamma = random_subsystem(&g, &mut rng)?;
        let sample = sample_circuit::<f64>(&g, depth, stream.derive(&[t, 1]))?;
        let rep = check_bounds(&sample, &gamma, s)?;
        Ok(AuditRow {
            trial: t,
            n: g.n(),
            depth,
            s,
            k: gamma.len(),
            s2: rep.s2,
            trivial: rep.trivial,
            light_cone: rep.light_cone,
            boundary: rep.boundary,
            ok: rep.all_ok(),
        })
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompressRow {
    pub c_band: f64,
    pub seed: u64,
    pub band: usize,
    pub gate_count: usize,
    pub gate_bound: usize,
    pub naive_gate_count: usize,
    pub hs_error: f64,
    pub eps_hat: f64,
    pub close_diag: bool,
    pub success: bool,
}

/// Maximum `||U - U~||_hs` counted as a successful compression.
pub const COMPRESS_HS_TARGET: f64 = 0.1;

/// Compresses `seeds` brickwall circuits at each `c_band`. Seed `i` uses the same circuit
/// for every `c_band`.
pub fn compress_sweep(
    n: usize,
    d: usize,
    kappa: f64,
    c_bands: &[f64],
    seeds: u64,
    stream: RngStream,
) -> Result<Vec<CompressRow>> {
    let g = brickwall_geometry(n)?;
    let naive = gate_count_naive(&g, d)?.two_mode;
    let bands = c_bands
        .iter()
        .map(|&c| effective_bandwidth(d, kappa, c, n).map(|w| (c, w)))
        .collect::<Result<Vec<_>>>()?;
    let per_seed = map_trials(seeds, |t| {
        let sample = sample_circuit::<f64>(&g, d, stream.derive(&[t]))?;
        bands
            .iter()
            .map(|&(c_band, w)| {
                let res = banded_compress(&sample.u, w)?;
                let gate_bound = n * w - w * (w + 1) / 2;
                let close_diag = res.close_diag_holds(res.eps_hat, 1e-10);
                Ok(CompressRow {
                    c_band,
                    seed: t,
                    band: w,
                    gate_count: res.gate_count,
                    gate_bound,
                    naive_gate_count: naive,
                    hs_error: res.hs_error,
                    eps_hat: res.eps_hat,
                    close_diag,
                    success: res.hs_error <= COMPRESS_HS_TARGET
                        && res.gate_count <= gate_bound
                        && 2 * gate_bound < naive,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    // Group by c_band, seeds ascending.
    Ok((0..bands.len())
        .flat_map(|i| per_seed.iter().map(move |rows| rows[i].clone()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecouplingDepth {
    /// Layers per step.
    pub m: usize,
    pub t_mix: usize,
    pub t_mix_reversed: usize,
    /// Meeting times in layers, i.e. time times `M`.
    pub meet_substeps: u64,
    pub meet_substeps_reversed: u64,
    /// `max t_mix + ceil(max t_meet)`.
    pub depth: usize,
}

/// Depth at which the decoupling lower bound is expected, from exact mixing and meeting
/// times of the walk and of its reversal.
pub fn decoupling_depth(
    geometry: &GeometrySpec,
    eps_mix: f64,
    eps_meet: f64,
    t_max: usize,
) -> Result<DecouplingDepth> {
    let reversed = geometry.reversed();
    let m = geometry.m();
    let not_reached =
        |what: &str| Error::InvalidArgument(format!("{what} not reached within t_max = {t_max}"));
    let t_mix = mixing_time(geometry, eps_mix, t_max)?.ok_or_else(|| not_reached("mixing"))?;
    let t_mix_reversed =
        mixing_time(&reversed, eps_mix, t_max)?.ok_or_else(|| not_reached("mixing"))?;
    let max_k = (t_max * m) as u64;
    let meet = ExactMeeting::new(geometry)
        .meeting_substeps(eps_meet, max_k)
        .ok_or_else(|| not_reached("meeting"))?;
    let meet_rev = ExactMeeting::new(&reversed)
        .meeting_substeps(eps_meet, max_k)
        .ok_or_else(|| not_reached("meeting"))?;
    let meet_steps = meet.max(meet_rev).div_ceil(m as u64) as usize;
    Ok(DecouplingDepth {
        m,
        t_mix,
        t_mix_reversed,
        meet_substeps: meet,
        meet_substeps_reversed: meet_rev,
        depth: t_mix.max(t_mix_reversed) + meet_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{brickwork_d_geometry, octahedral_geometry};

    #[test]
    fn sweep_matches_direct_samples() {
        let g = brickwall_geometry(8).unwrap();
        let gamma = Subsystem::first(4, 8).unwrap();
        let sw = entropy_sweep(&g, &[0, 2, 5], &gamma, 1.0, 20, RngStream::new(3)).unwrap();
        assert_eq!(sw.aggregates[0].mean_s2, 0.0);
        for t in [0u64, 7, 19] {
            let u = sample_circuit::<f64>(&g, 5, RngStream::new(3).derive(&[t]))
                .unwrap()
                .u;
            let v = renyi2_eig(&u, &gamma, 1.0).unwrap().value;
            assert_eq!(sw.per_trial[t as usize][2], v);
        }
        sw.check_consistency().unwrap();
        assert!(entropy_sweep(&g, &[2, 2], &gamma, 1.0, 2, RngStream::new(3)).is_err());
    }

    #[test]
    fn broken_aggregate_is_caught() {
        let g = brickwall_geometry(4).unwrap();
        let gamma = Subsystem::first(2, 4).unwrap();
        let mut sw = entropy_sweep(&g, &[3], &gamma, 1.0, 30, RngStream::new(1)).unwrap();
        sw.aggregates[0].mean_s2 += 1e-3;
        assert!(matches!(
            sw.check_consistency(),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn exponent_fit() {
        let pts: Vec<(f64, f64)> = (1..20)
            .map(|x| (x as f64, 3.0 * (x as f64).powf(0.5)))
            .collect();
        assert!((power_law_exponent(&pts).unwrap() - 0.5).abs() < 1e-12);
        assert!(power_law_exponent(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn audit_small() {
        let rows = bounds_audit(
            &AuditGeometry::Brickwall { n_max: 12 },
            &[1, 2, 3, 6],
            2.0,
            200,
            RngStream::new(5),
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.ok));
        assert!(rows.iter().any(|r| r.light_cone.is_some()));
        let g = brickwork_d_geometry(4, 2, None).unwrap();
        let rows = bounds_audit(
            &AuditGeometry::Fixed(g),
            &[1, 2],
            1.0,
            100,
            RngStream::new(6),
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.ok));
    }

    #[test]
    fn compress_sweep_shape() {
        let rows = compress_sweep(16, 6, 2.0, &[1.0, 2.0], 3, RngStream::new(2)).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows[..3].iter().all(|r| r.c_band == 1.0));
        assert!(rows
            .iter()
            .all(|r| r.gate_count <= r.gate_bound && r.close_diag));
    }

    #[test]
    fn decoupling_depth_small() {
        let g = brickwall_geometry(4).unwrap();
        let dd = decoupling_depth(&g, 1.0 / 16.0, 1.0 / 64.0, 1000).unwrap();
        assert!(dd.depth >= dd.t_mix && dd.t_mix > 0);
        assert!(decoupling_depth(&octahedral_geometry(), 1e-3, 1e-3, 1000).is_ok());
        assert!(decoupling_depth(&g, 1e-9, 1e-9, 2).is_err());
    }
}
