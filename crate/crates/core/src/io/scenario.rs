//! JSON scenario files.
//!
//! ```json
//! {
//!   "config": { "n_subcarriers": 256, "n_tx": 8, "n_rx": 8 },
//!   "targets": [
//!     { "range_m": 60.0, "velocity_mps": 12.0, "aoa_deg": 10.0, "focal_group": 0 }
//!   ],
//!   "users": { "count": 2, "range_m": 40.0, "seed": 3 },
//!   "focal_angles_deg": [10.0],
//!   "clutter": { "count": 4, "power": 0.01 },
//!   "constellation": "qpsk",
//!   "seed": 1
//! }
//! ```
//!
//! Every block is optional; omitted fields take the reference defaults.
//! Angles are given in degrees and stored in radians.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::params::{derive_config, normalize_path, PathGroup, PathParams, RawConfig, SystemConfig};
use crate::waveform::Constellation;
use crate::Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub range_m: f64,
    #[serde(default)]
    pub velocity_mps: f64,
    #[serde(default)]
    pub aoa_deg: f64,
    /// Defaults to `aoa_deg` (monostatic).
    #[serde(default)]
    pub aod_deg: Option<f64>,
    #[serde(default = "one")]
    pub reflect_re: f64,
    #[serde(default)]
    pub reflect_im: f64,
    #[serde(default)]
    pub focal_group: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterSpec {
    pub count: usize,
    /// Mean `|a|^2` of the Rayleigh-distributed clutter reflections.
    pub power: f64,
    pub min_range_m: f64,
    /// Upper range limit; zero selects an eighth of the unambiguous range.
    pub max_range_m: f64,
}

impl Default for ClutterSpec {
    fn default() -> Self {
        Self { count: 0, power: 0.01, min_range_m: 5.0, max_range_m: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamformerMode {
    /// Alternating sum-rate optimization.
    Optimized,
    ZeroForcing,
    SensingOnly,
    /// Every user steered at the first focal angle with equal power.
    Steered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub mode: BeamformerMode,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { mode: BeamformerMode::Optimized, max_iter: 50, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub config: RawConfig,
    pub targets: Vec<TargetSpec>,
    pub users: ChannelSpec,
    pub focal_angles_deg: Vec<f64>,
    pub clutter: ClutterSpec,
    pub constellation: String,
    pub beamformer: OptimizerSpec,
    pub noise: bool,
    pub seed: u64,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            config: RawConfig::default(),
            targets: Vec::new(),
            users: ChannelSpec::default(),
            focal_angles_deg: vec![0.0],
            clutter: ClutterSpec::default(),
            constellation: "qpsk".into(),
            beamformer: OptimizerSpec::default(),
            noise: true,
            seed: 0,
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub cfg: SystemConfig,
    pub targets: Vec<PathParams>,
    pub clutter: Vec<PathParams>,
    pub focal_angles_rad: Vec<f64>,
    pub constellation: Constellation,
}

impl Scenario {
    /// Targets followed by clutter.
    pub fn paths(&self) -> Vec<PathParams> {
        self.targets.iter().chain(&self.clutter).cloned().collect()
    }
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse { field: if path == "." { "<root>".into() } else { path }, msg: e.inner().to_string() }
    })?;
    validate(file)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario_str(&fs::read_to_string(path)?)
}

pub fn validate(file: ScenarioFile) -> Result<Scenario> {
    let cfg = derive_config(file.config.clone())?;
    let constellation: Constellation = file.constellation.parse()?;
    if file.users.count == 0 {
        return Err(Error::Validation("users.count must be at least 1".into()));
    }
    if file.focal_angles_deg.iter().any(|a| !a.is_finite() || a.abs() > 90.0) {
        return Err(Error::Validation("focal angles must lie in [-90, 90] degrees".into()));
    }
    let mut targets = Vec::with_capacity(file.targets.len());
    for (i, t) in file.targets.iter().enumerate() {
        if t.focal_group >= file.focal_angles_deg.len() {
            return Err(Error::Validation(format!(
                "targets[{i}].focal_group {} has no focal angle ({} defined)",
                t.focal_group,
                file.focal_angles_deg.len()
            )));
        }
        let p = PathParams {
            range_m: t.range_m,
            velocity_mps: t.velocity_mps,
            aoa_rad: t.aoa_deg.to_radians(),
            aod_rad: t.aod_deg.unwrap_or(t.aoa_deg).to_radians(),
            reflect: Complex64::new(t.reflect_re, t.reflect_im),
            group: PathGroup::Focal(t.focal_group),
        };
        let np = normalize_path(&p, &cfg).map_err(|e| Error::Validation(format!("targets[{i}]: {e}")))?;
        if np.ambiguous {
            log::warn!("targets[{i}] exceeds the unambiguous velocity and will alias");
        }
        targets.push(p);
    }
    let clutter = draw_clutter(&file.clutter, &cfg, file.seed)?;
    Ok(Scenario {
        focal_angles_rad: file.focal_angles_deg.iter().map(|a| a.to_radians()).collect(),
        constellation,
        cfg,
        targets,
        clutter,
        file,
    })
}

/// Static clutter: uniform range and angle, Rayleigh magnitude, uniform phase.
pub fn draw_clutter(spec: &ClutterSpec, cfg: &SystemConfig, seed: u64) -> Result<Vec<PathParams>> {
    if spec.count == 0 {
        return Ok(Vec::new());
    }
    let hi = if spec.max_range_m > 0.0 { spec.max_range_m } else { cfg.unambiguous_range() / 8.0 };
    if !(spec.power >= 0.0 && spec.min_range_m >= 0.0 && spec.min_range_m < hi && hi < cfg.unambiguous_range()) {
        return Err(Error::Validation(format!(
            "clutter ranges [{}, {hi}) m or power {} invalid",
            spec.min_range_m, spec.power
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1u64.rotate_left(56));
    Ok((0..spec.count)
        .map(|_| {
            let range_m = rng.random_range(spec.min_range_m..hi);
            let angle = rng.random_range(-90.0f64..90.0).to_radians();
            let e: f64 = Exp1.sample(&mut rng);
            let mag = (spec.power * e).sqrt();
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            PathParams {
                range_m,
                velocity_mps: 0.0,
                aoa_rad: angle,
                aod_rad: angle,
                reflect: Complex64::from_polar(mag, phase),
                group: PathGroup::Clutter,
            }
        })
        .collect())
}
