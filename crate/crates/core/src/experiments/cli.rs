use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::{ExperimentConfig, GammaConfig, Kind, FULL_TRIALS};
use super::run;
use crate::compress::{banded_compress, effective_bandwidth, gate_count_naive};
use crate::geometry::{brickwall_geometry, GeometryConfig};
use crate::sampler::{sample_circuit, RngStream};
use crate::{Error, Result};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRIAL: i32 = 3;
pub const EXIT_OTHER: i32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "linopt",
    version,
    about = "Random linear-optical circuit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Renyi-2 entropy against depth (aggregate.csv, per_trial.csv, haar.csv).
    EntropySweep(RunArgs),
    /// Mean |U U^T| matrix (heatmap.csv).
    UutHeatmap(RunArgs),
    /// Monte Carlo second moments against the walk kernel (walk_check.csv).
    WalkCheck(RunArgs),
    /// Worst-start TV distance to uniform and t_mix (mixing.csv).
    Mixing(RunArgs),
    /// Pair-walk meeting tails (meeting.csv).
    Meeting(RunArgs),
    /// Fourth moments at the decoupling depth (moments.csv).
    Decouple(RunArgs),
    /// Banded compression over seeds and band constants (compress.csv).
    CompressSweep(RunArgs),
    /// Random audit of the entropy upper bounds (bounds.csv).
    BoundsAudit(RunArgs),
    /// Compress one sampled brickwall circuit and print the result.
    Compress(CompressArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GeometryName {
    Brickwall,
    Brickwork,
    Octahedral,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Output root; files go to <out>/<config hash>/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 or unset: all cores).
    #[arg(long, env = "LINOPT_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated depths.
    #[arg(long, value_delimiter = ',', alias = "depths")]
    depth: Vec<usize>,
    #[arg(long)]
    s: Option<f64>,
    /// Subsystem size (first k modes).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Comma-separated band constants.
    #[arg(long, value_delimiter = ',')]
    c_band: Vec<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_meet: Option<f64>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, value_enum)]
    geometry: Option<GeometryName>,
    /// Brickwork side length.
    #[arg(long)]
    m: Option<usize>,
    /// Brickwork dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Haar reference trials for entropy sweeps.
    #[arg(long)]
    haar_trials: Option<u64>,
    /// Use the full trial count for entropy sweeps.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    per_trial: bool,
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    depth: usize,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 2.0)]
    c_band: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the gate list as JSON.
    #[arg(long)]
    gates_out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, kind: Kind) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let c = ExperimentConfig::from_file(path)?;
                if c.kind != kind {
                    return Err(Error::config(
                        "kind",
                        format!("config is {}, subcommand is {}", c.kind.name(), kind.name()),
                    ));
                }
                c
            }
            None => ExperimentConfig::new(kind),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if self.full {
            c.trials = Some(FULL_TRIALS);
        }
        if let Some(v) = self.trials {
            c.trials = Some(v);
        }
        if let Some(v) = self.n {
            c.n = Some(v);
        }
        if !self.depth.is_empty() {
            c.depths = self.depth.clone();
        }
        if let Some(v) = self.s {
            c.s = Some(v);
        }
        if let Some(v) = self.k {
            c.gamma = Some(GammaConfig::First(v));
        }
        if let Some(v) = self.kappa {
            c.kappa = Some(v);
        }
        match self.c_band.as_slice() {
            [] => {}
            [one] => {
                c.c_band = Some(*one);
                c.c_bands.clear();
            }
            many => c.c_bands = many.to_vec(),
        }
        if let Some(v) = self.epsilon {
            c.epsilon = Some(v);
        }
        if let Some(v) = self.epsilon_meet {
            c.epsilon_meet = Some(v);
        }
        if let Some(v) = self.t_max {
            c.t_max = Some(v);
        }
        if let Some(v) = self.haar_trials {
            c.haar_trials = v;
        }
        if self.per_trial {
            c.per_trial = true;
        }
        match self.geometry {
            None => {}
            Some(GeometryName::Brickwall) => c.geometry = GeometryConfig::Brickwall,
            Some(GeometryName::Octahedral) => c.geometry = GeometryConfig::Octahedral,
            Some(GeometryName::Brickwork) => {
                let (m, dim) = match (self.m, self.dim) {
                    (Some(m), Some(dim)) => (m, dim),
                    _ => return Err(Error::config("geometry", "brickwork needs --m and --dim")),
                };
                c.geometry = GeometryConfig::Brickwork {
                    m,
                    dim,
                    order: None,
                };
            }
        }
        Ok(c)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Trial { .. } => EXIT_TRIAL,
        _ => EXIT_OTHER,
    }
}

fn kind_of(cmd: &Command) -> Option<(Kind, &RunArgs)> {
    Some(match cmd {
        Command::EntropySweep(a) => (Kind::EntropySweep, a),
        Command::UutHeatmap(a) => (Kind::UutHeatmap, a),
        Command::WalkCheck(a) => (Kind::WalkCheck, a),
        Command::Mixing(a) => (Kind::Mixing, a),
        Command::Meeting(a) => (Kind::Meeting, a),
        Command::Decouple(a) => (Kind::Decouple, a),
        Command::CompressSweep(a) => (Kind::CompressSweep, a),
        Command::BoundsAudit(a) => (Kind::BoundsAudit, a),
        Command::Compress(_) => return None,
    })
}

fn run_compress(a: &CompressArgs, out: &mut dyn Write) -> Result<()> {
    let bad = |e: Error| Error::config("arguments", e.to_string());
    let g = brickwall_geometry(a.n).map_err(bad)?;
    let w = effective_bandwidth(a.depth, a.kappa, a.c_band, a.n).map_err(bad)?;
    let sample =
        sample_circuit::<f64>(&g, a.depth, RngStream::new(a.seed)).map_err(|e| e.in_trial(0))?;
    let res = banded_compress(&sample.u, w).map_err(|e| e.in_trial(0))?;
    let naive = gate_count_naive(&g, a.depth)?;
    writeln!(out, "band {}", res.band)?;
    writeln!(out, "gate_count {}", res.gate_count)?;
    writeln!(out, "gate_bound {}", a.n * w - w * (w + 1) / 2)?;
    writeln!(out, "naive_gate_count {}", naive.two_mode)?;
    writeln!(out, "hs_error {}", res.hs_error)?;
    writeln!(out, "eps_hat {}", res.eps_hat)?;
    if let Some(path) = &a.gates_out {
        std::fs::write(path, serde_json::to_vec(&res.gates)?)?;
        writeln!(out, "gates {}", path.display())?;
    }
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None | Some(0) => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn cli_with_output<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let result = match kind_of(&parsed.command) {
        None => match &parsed.command {
            Command::Compress(a) => run_compress(a, out),
            _ => unreachable!(),
        },
        Some((kind, args)) => args.config(kind).and_then(|config| {
            let record = with_threads(args.threads, || run(&config, &args.out))??;
            writeln!(out, "{}", serde_json::to_string(&record.summary)?)?;
            writeln!(out, "{}", record.manifest_path().display())?;
            Ok(())
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// [`cli_with_output`] on the process's stdout and stderr.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_with_output(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        let trial = Error::InvalidArgument("x".into()).in_trial(4);
        assert_eq!(exit_code(&trial), EXIT_TRIAL);
        assert_eq!(exit_code(&Error::config("n", "bad")), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_OTHER);
    }

    #[test]
    fn flags_override_config_fields() {
        let cli = Cli::try_parse_from([
            "linopt",
            "entropy-sweep",
            "--n",
            "12",
            "--depths",
            "1,3",
            "--k",
            "4",
            "--seed",
            "9",
        ])
        .unwrap();
        let (kind, args) = kind_of(&cli.command).unwrap();
        let c = args.config(kind).unwrap();
        assert_eq!(c.n, Some(12));
        assert_eq!(c.depths, vec![1, 3]);
        assert_eq!(c.seed, 9);
    }
}
