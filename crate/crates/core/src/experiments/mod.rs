//! Config-driven experiment runs, their output files, and the command line.
//!
//! A run writes its CSVs and a `manifest.json` into `<out>/<config hash>/`. The
//! manifest echoes the effective config and lists every file with its SHA-256.
//! CSV contents depend only on the config (including the seed), never on the
//! thread count.

mod cli;
mod config;
mod sweeps;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::geometry::GeometryConfig;
use crate::moments::{estimate_moments, haar_reference, uut_heatmap, Collect, Side, Source};
use crate::sampler::RngStream;
use crate::walk::{
    meeting_time, meeting_time_tail, mixing_curve, step_kernel, verify_boson_rw_all,
};
use crate::{Error, Result};

pub use cli::{cli, cli_with_output, EXIT_CONFIG, EXIT_OTHER, EXIT_TRIAL};
pub use config::{ExperimentConfig, GammaConfig, Kind, DEFAULT_TRIALS, FULL_TRIALS};
pub use sweeps::{
    bounds_audit, compress_sweep, decoupling_depth, entropy_sweep, power_law_exponent,
    AuditGeometry, AuditRow, CompressRow, DecouplingDepth, DepthAggregate, EntropySweep,
    COMPRESS_HS_TARGET,
};

/// Factor applied to the asymptotic decoupling bound `1/(3 n^2)`.
pub const DECOUPLE_FACTOR: f64 = 0.9;

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub kind: Kind,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub build_id: String,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub files: Vec<FileEntry>,
    /// Kind-specific results (pass flags, fitted times).
    pub summary: serde_json::Value,
    /// Entropy sweeps only.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub aggregates: Vec<DepthAggregate>,
}

impl RunRecord {
    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }
}

pub fn build_id() -> String {
    match option_env!("LINOPT_BUILD_ID") {
        Some(id) => format!("linopt-{}+{id}", env!("CARGO_PKG_VERSION")),
        None => format!("linopt-{}", env!("CARGO_PKG_VERSION")),
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Output {
            dir,
            files: Vec::new(),
        })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        drop(w);
        self.record(name, &path)
    }

    fn record(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

/// Row of a moment table.
#[derive(Serialize)]
struct MomentRow {
    target: String,
    params: String,
    value: f64,
    stderr: f64,
    trials: u64,
}

#[derive(Serialize)]
struct PerTrialRow {
    depth: usize,
    trial: u64,
    s2: f64,
}

#[derive(Serialize)]
struct HeatmapRow {
    x: usize,
    y: usize,
    mean_abs_uut: f64,
}

#[derive(Serialize)]
struct ZRow {
    depth: usize,
    x: usize,
    y: usize,
    estimate: f64,
    stderr: f64,
    exact: f64,
    z: f64,
}

#[derive(Serialize)]
struct MixingRow {
    t: usize,
    max_tv: f64,
}

#[derive(Serialize)]
struct MeetingRow {
    #[serde(rename = "t_times_M")]
    t_times_m: u64,
    start_x: usize,
    start_y: usize,
    tail_estimate: f64,
    stderr: f64,
}

/// Runs one experiment and writes its files under `out_root/<config hash>/`.
pub fn run(config: &ExperimentConfig, out_root: &Path) -> Result<RunRecord> {
    let start = Instant::now();
    let hash = config.hash();
    let mut out = Output::new(out_root.join(&hash))?;
    let root = RngStream::new(config.seed);
    let mut aggregates = Vec::new();
    let summary = match config.kind {
        Kind::EntropySweep => {
            let g = config.geometry()?;
            let depths = config.require_depths()?;
            let gamma = config.gamma(g.n())?;
            let s = config.s()?;
            let sweep = entropy_sweep(&g, depths, &gamma, s, config.trials()?, root.derive(&[0]))?;
            out.csv("aggregate.csv", &sweep.aggregates)?;
            if config.per_trial {
                let rows = sweep.depths.iter().enumerate().flat_map(|(i, &depth)| {
                    sweep
                        .per_trial
                        .iter()
                        .enumerate()
                        .map(move |(t, row)| PerTrialRow {
                            depth,
                            trial: t as u64,
                            s2: row[i],
                        })
                });
                out.csv("per_trial.csv", rows)?;
            }
            let mut summary = json!({ "n": g.n(), "k": gamma.len(), "s": s });
            if config.haar_trials > 0 {
                let h = haar_reference(g.n(), &gamma, s, config.haar_trials, root.derive(&[1]))?;
                out.csv(
                    "haar.csv",
                    [MomentRow {
                        target: "haar_s2".into(),
                        params: format!("n={};k={};s={s}", g.n(), gamma.len()),
                        value: h.value,
                        stderr: h.stderr,
                        trials: h.trials,
                    }],
                )?;
                summary["haar_mean_s2"] = json!(h.value);
                summary["haar_stderr_s2"] = json!(h.stderr);
            }
            aggregates = sweep.aggregates;
            summary
        }
        Kind::UutHeatmap => {
            let g = config.geometry()?;
            let d = config.single_depth()?;
            let trials = config.trials()?;
            let m = uut_heatmap(&g, d, trials.max(2), root)?;
            let n = g.n();
            let rows = (0..n).flat_map(|x| {
                let m = &m;
                (0..n).map(move |y| HeatmapRow {
                    x: x + 1,
                    y: y + 1,
                    mean_abs_uut: m[(x, y)],
                })
            });
            out.csv("heatmap.csv", rows)?;
            json!({ "n": n, "depth": d })
        }
        Kind::WalkCheck => {
            let g = config.geometry()?;
            let depths = config.require_depths()?;
            let trials = config.trials()?.max(2);
            let mut rows = Vec::new();
            for (i, &d) in depths.iter().enumerate() {
                for e in verify_boson_rw_all(&g, d, trials, root.derive(&[i as u64]))? {
                    rows.push(ZRow {
                        depth: d,
                        x: e.x + 1,
                        y: e.y + 1,
                        estimate: e.estimate.value,
                        stderr: e.estimate.stderr,
                        exact: e.exact,
                        z: e.z,
                    });
                }
            }
            let max_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
            out.csv("walk_check.csv", &rows)?;
            json!({ "max_abs_z": max_z, "pass": max_z <= 5.0 })
        }
        Kind::Mixing => {
            let g = config.geometry()?;
            let n = g.n() as f64;
            let eps = config.epsilon(1.0 / (n * n))?;
            let t_max = config.t_max(100 * g.n() * g.n())?;
            let curve = mixing_curve(&step_kernel(&g), t_max, eps);
            let t_mix = curve.iter().position(|&tv| tv <= eps);
            out.csv(
                "mixing.csv",
                curve
                    .iter()
                    .enumerate()
                    .map(|(t, &max_tv)| MixingRow { t, max_tv }),
            )?;
            json!({ "epsilon": eps, "t_mix": t_mix })
        }
        Kind::Meeting => {
            let g = config.geometry()?;
            let n = g.n() as f64;
            let eps = config.epsilon(1.0 / (n * n))?;
            let t_max = config.t_max(4 * g.n() * g.n())?;
            let max_k = (t_max * g.m()) as u64;
            let rep = meeting_time_tail(&g, max_k, config.trials()?, root)?;
            let rows = rep.pairs.iter().flat_map(|p| {
                (0..=max_k as usize).map(move |k| MeetingRow {
                    t_times_m: k as u64,
                    start_x: p.start.0 + 1,
                    start_y: p.start.1 + 1,
                    tail_estimate: p.tail[k],
                    stderr: p.stderr[k],
                })
            });
            out.csv("meeting.csv", rows)?;
            let mc = (0..=max_k as usize).find(|&k| rep.max_tail(k) <= eps);
            json!({
                "epsilon": eps,
                "m": g.m(),
                "meet_substeps_estimate": mc,
                "meet_substeps_exact": meeting_time(&g, eps, max_k),
            })
        }
        Kind::Decouple => {
            let g = config.geometry()?;
            let n = g.n() as f64;
            let eps_mix = config.epsilon(1.0 / (n * n))?;
            let eps_meet = config.epsilon_meet(1.0 / (n * n * n))?;
            let t_max = config.t_max(100 * g.n() * g.n())?;
            let dd = decoupling_depth(&g, eps_mix, eps_meet, t_max)?;
            let d = if config.depths.is_empty() {
                dd.depth
            } else {
                config.single_depth()?
            };
            let trials = config.trials()?.max(2);
            let collect = Collect {
                fourth: true,
                ..Collect::default()
            };
            let tables = estimate_moments(
                &Source::Circuit {
                    geometry: &g,
                    depth: d,
                },
                trials,
                root,
                collect,
            )?;
            let threshold = DECOUPLE_FACTOR / (3.0 * n * n);
            let mut rows = Vec::new();
            let mut worst = f64::INFINITY;
            let mut pass = true;
            for (side, tag) in [(Side::Rows, "fourth_rows"), (Side::Cols, "fourth_cols")] {
                for a in 0..g.n() {
                    for x in 0..g.n() {
                        for y in 0..g.n() {
                            let e = tables.fourth(side, a, x, y)?;
                            worst = worst.min(e.value);
                            pass &= e.value >= threshold - 3.0 * e.stderr;
                            rows.push(MomentRow {
                                target: tag.into(),
                                params: format!("alpha={};x={};y={};d={d}", a + 1, x + 1, y + 1),
                                value: e.value,
                                stderr: e.stderr,
                                trials: e.trials,
                            });
                        }
                    }
                }
            }
            out.csv("moments.csv", rows)?;
            json!({
                "depth": d,
                "decoupling": dd,
                "threshold": threshold,
                "min_estimate": worst,
                "pass": pass,
            })
        }
        Kind::CompressSweep => {
            let n = config.n.unwrap_or(64);
            let d = config.single_depth()?;
            let kappa = config.kappa()?;
            let c_bands = config.c_bands()?;
            let rows = compress_sweep(n, d, kappa, &c_bands, config.trials()?, root).map_err(
                |e| match e {
                    e @ Error::Trial { .. } => e,
                    e => Error::config("depths", e.to_string()),
                },
            )?;
            let per_band: Vec<serde_json::Value> = c_bands
                .iter()
                .map(|&c| {
                    let mine: Vec<&CompressRow> = rows.iter().filter(|r| r.c_band == c).collect();
                    json!({
                        "c_band": c,
                        "band": mine.first().map(|r| r.band),
                        "successes": mine.iter().filter(|r| r.success).count(),
                        "close_diag_all": mine.iter().all(|r| r.close_diag),
                        "seeds": mine.len(),
                    })
                })
                .collect();
            out.csv("compress.csv", &rows)?;
            json!({ "n": n, "depth": d, "kappa": kappa, "per_band": per_band })
        }
        Kind::BoundsAudit => {
            let depths = config.require_depths()?;
            let geometry = match config.geometry {
                GeometryConfig::Brickwall => AuditGeometry::Brickwall {
                    n_max: config.n()?.max(2),
                },
                _ => AuditGeometry::Fixed(config.geometry()?),
            };
            let s_max = config.s.unwrap_or(2.0);
            if !(s_max > 0.0 && s_max.is_finite()) {
                return Err(Error::config("s", "must be positive"));
            }
            let rows = bounds_audit(&geometry, depths, s_max, config.trials()?, root)?;
            let violations = rows.iter().filter(|r| !r.ok).count();
            out.csv("bounds.csv", &rows)?;
            json!({ "samples": rows.len(), "violations": violations })
        }
    };
    let mut record = RunRecord {
        kind: config.kind,
        config: config.clone(),
        config_hash: hash,
        seed: config.seed,
        build_id: build_id(),
        wall_time_s: 0.0,
        out_dir: out.dir.clone(),
        files: out.files,
        summary,
        aggregates,
    };
    record.wall_time_s = start.elapsed().as_secs_f64();
    std::fs::write(record.manifest_path(), serde_json::to_vec_pretty(&record)?)?;
    Ok(record)
}
