//! Experiment configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gaussian::Subsystem;
use crate::geometry::{GeometryConfig, GeometrySpec};
use crate::{Error, Result};

/// Default trial count for entropy sweeps; `--full` switches to [`FULL_TRIALS`].
pub const DEFAULT_TRIALS: u64 = 200;
pub const FULL_TRIALS: u64 = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    EntropySweep,
    UutHeatmap,
    WalkCheck,
    Mixing,
    Meeting,
    Decouple,
    CompressSweep,
    BoundsAudit,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::EntropySweep => "entropy-sweep",
            Kind::UutHeatmap => "uut-heatmap",
            Kind::WalkCheck => "walk-check",
            Kind::Mixing => "mixing",
            Kind::Meeting => "meeting",
            Kind::Decouple => "decouple",
            Kind::CompressSweep => "compress-sweep",
            Kind::BoundsAudit => "bounds-audit",
        }
    }
}

/// Subsystem as a size `k` (first `k` modes) or an explicit list of 1-based modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaConfig {
    First(usize),
    Modes(Vec<usize>),
}

/// One experiment. Unused knobs are ignored by kinds that do not need them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depths: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_geometry")]
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_band: Option<f64>,
    /// Sweep values for compress-sweep; defaults to `[c_band]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c_bands: Vec<f64>,
    /// Mixing threshold (default `1/n^2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Meeting threshold for decouple (default `1/n^3`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_meet: Option<f64>,
    /// Horizon in steps for mixing and meeting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    /// Trials for the Haar reference of an entropy sweep (0 = skip).
    #[serde(default)]
    pub haar_trials: u64,
    /// Also write one row per trial (entropy-sweep).
    #[serde(default)]
    pub per_trial: bool,
}

fn default_geometry() -> GeometryConfig {
    GeometryConfig::Brickwall
}

impl ExperimentConfig {
    pub fn new(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            n: None,
            depths: Vec::new(),
            s: None,
            gamma: None,
            trials: None,
            seed: 0,
            geometry: default_geometry(),
            kappa: None,
            c_band: None,
            c_bands: Vec::new(),
            epsilon: None,
            epsilon_meet: None,
            t_max: None,
            haar_trials: 0,
            per_trial: false,
        }
    }

    /// Parses JSON, reporting the field path of the first error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    pub fn geometry(&self) -> Result<GeometrySpec> {
        self.geometry
            .build(self.n)
            .map_err(|e| Error::config("geometry", e.to_string()))
    }

    pub fn trials(&self) -> Result<u64> {
        match self.trials {
            Some(0) => Err(Error::config("trials", "must be at least 1")),
            Some(t) => Ok(t),
            None => Ok(DEFAULT_TRIALS),
        }
    }

    pub fn require_depths(&self) -> Result<&[usize]> {
        if self.depths.is_empty() {
            return Err(Error::config("depths", "must be nonempty"));
        }
        if let Some(i) = self.depths.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::config(
                format!("depths[{}]", i + 1),
                "depths must be strictly increasing",
            ));
        }
        Ok(&self.depths)
    }

    pub fn single_depth(&self) -> Result<usize> {
        match self.require_depths()? {
            [d] => Ok(*d),
            _ => Err(Error::config("depths", "this kind takes exactly one depth")),
        }
    }

    pub fn s(&self) -> Result<f64> {
        let s = self.s.unwrap_or(1.0);
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::config(
                "s",
                format!("must be finite and >= 0, got {s}"),
            ));
        }
        Ok(s)
    }

    pub fn gamma(&self, n: usize) -> Result<Subsystem> {
        let sub = match &self.gamma {
            None => Subsystem::first((n / 2).max(1), n),
            Some(GammaConfig::First(k)) => Subsystem::first(*k, n),
            Some(GammaConfig::Modes(m)) => Subsystem::new(n, m),
        };
        sub.map_err(|e| Error::config("gamma", e.to_string()))
    }

    pub fn epsilon(&self, default: f64) -> Result<f64> {
        let e = self.epsilon.unwrap_or(default);
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::config(
                "epsilon",
                format!("must lie in (0, 1), got {e}"),
            ));
        }
        Ok(e)
    }

    pub fn epsilon_meet(&self, default: f64) -> Result<f64> {
        let e = self.epsilon_meet.unwrap_or(default);
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::config(
                "epsilon_meet",
                format!("must lie in (0, 1), got {e}"),
            ));
        }
        Ok(e)
    }

    pub fn t_max(&self, default: usize) -> Result<usize> {
        match self.t_max {
            Some(0) => Err(Error::config("t_max", "must be at least 1")),
            Some(t) => Ok(t),
            None => Ok(default),
        }
    }

    pub fn kappa(&self) -> Result<f64> {
        let k = self.kappa.unwrap_or(2.0);
        if !(k >= 1.0) {
            return Err(Error::config("kappa", format!("must be >= 1, got {k}")));
        }
        Ok(k)
    }

    pub fn c_bands(&self) -> Result<Vec<f64>> {
        let list = if self.c_bands.is_empty() {
            vec![self.c_band.unwrap_or(2.0)]
        } else {
            self.c_bands.clone()
        };
        if let Some(i) = list.iter().position(|c| !(*c > 0.0 && c.is_finite())) {
            let path = if self.c_bands.is_empty() {
                "c_band".to_string()
            } else {
                format!("c_bands[{i}]")
            };
            return Err(Error::config(path, "must be positive"));
        }
        Ok(list)
    }

    pub fn n(&self) -> Result<usize> {
        self.n
            .ok_or_else(|| Error::config("n", "required for this kind"))
    }
}
