//! Experiment configuration: one JSON tree with a `version` field. Unknown
//! keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::FieldSpec;
use crate::error::{Error, Result};
use crate::hamiltonian::PowerLawHamiltonian;
use crate::hj::{FdGrid, InitialDatum, LatticeResolution};
use crate::homog::{Probe, SubadditiveSchedule, TentOptions};
use crate::optimizer::LatticeSpec;

pub const CONFIG_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfLaxSection {
    pub resolution: LatticeResolution,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub radius: f64,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSection {
    pub grid: FdGrid,
    pub cfl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub x: Vec<f64>,
    pub t: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsSection {
    pub r: f64,
    pub samples: usize,
    pub spacing: f64,
    pub times: Vec<f64>,
    #[serde(default = "theta_reg")]
    pub theta_reg: f64,
}

fn theta_reg() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiSection {
    pub horizon: f64,
    pub samples: usize,
    #[serde(default = "psi_steps")]
    pub path_steps: usize,
}

fn psi_steps() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: String,
    pub hamiltonian: PowerLawHamiltonian,
    pub field: FieldSpec,
    /// Microscopic lattice for actions and `L-bar`.
    pub lattice: LatticeSpec,
    /// Brownian step; must divide `lattice.dt`.
    pub path_dt: f64,
    pub schedule: SubadditiveSchedule,
    #[serde(default)]
    pub p_grid: Vec<Vec<f64>>,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub theta_list: Vec<f64>,
    #[serde(default)]
    pub probes: Vec<Probe>,
    pub initial: InitialDatum,
    pub hopf_lax: HopfLaxSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd: Option<FdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tent: Option<TentOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tails: Option<TailsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiSection>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn multiple_of(a: f64, b: f64) -> bool {
    let r = a / b;
    r >= 1.0 - 1e-9 && (r - r.round()).abs() <= 1e-9 * r.max(1.0)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
    }

    /// Parses `text`, applies `key.path=value` overrides, then validates.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
        let mut tree: Value = serde_json::from_str(text)?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json_with_overrides(&self.to_json()?, overrides)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {:?} is not supported (expected {CONFIG_VERSION:?})", self.version));
        }
        self.hamiltonian.validate()?;
        self.field.validate()?;
        self.lattice.validate()?;
        self.schedule.validate()?;
        self.initial.validate()?;
        let d = self.field.dimension;
        if self.lattice.dim() != d {
            return bad("lattice and field dimensions differ".into());
        }
        if self.initial.dim().is_some_and(|k| k != d) {
            return bad("initial datum and field dimensions differ".into());
        }
        if self.schedule.velocities.iter().chain(&self.p_grid).any(|v| v.len() != d) {
            return bad("velocity or momentum grid has the wrong dimension".into());
        }
        if !(self.path_dt > 0.0) || !multiple_of(self.lattice.dt, self.path_dt) {
            return bad(format!("lattice dt {} is not a multiple of path_dt {}", self.lattice.dt, self.path_dt));
        }
        let hl = &self.hopf_lax;
        if !multiple_of(hl.resolution.dt, self.path_dt) {
            return bad(format!("hopf_lax dt {} is not a multiple of path_dt {}", hl.resolution.dt, self.path_dt));
        }
        if hl.lower.len() != d || hl.upper.len() != d || !(hl.radius > 0.0) {
            return bad("hopf_lax box must match the dimension and radius must be positive".into());
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0)) {
            return bad("eps_list entries must be positive".into());
        }
        if let Some(fd) = &self.fd {
            let eps_min = self.eps_list.iter().copied().fold(f64::INFINITY, f64::min);
            if eps_min.is_finite() && fd.grid.h > eps_min / 8.0 {
                return bad(format!("fd grid h = {} exceeds eps_min / 8 = {}", fd.grid.h, eps_min / 8.0));
            }
            if !(fd.cfl > 0.0 && fd.cfl <= 1.0) {
                return bad(format!("cfl {} must lie in (0, 1]", fd.cfl));
            }
        }
        if let Some(t) = &self.tent {
            if t.delta > t.m / 2.0 || t.delta < 0.0 {
                return bad(format!("tent delta {} must lie in [0, M/2 = {}]", t.delta, t.m / 2.0));
            }
            if !multiple_of(t.path_dt, self.path_dt) && !multiple_of(self.path_dt, t.path_dt) {
                return bad("tent path_dt and path_dt are incommensurate".into());
            }
        }
        if let Some(t) = &self.tails {
            if !(t.r > 1.0) {
                return bad("tails.r must exceed 1".into());
            }
        }
        for p in &self.probes {
            if p.x.len() != d || p.y.len() != d || !(p.t > p.s) {
                return bad(format!("probe {p:?} is malformed"));
            }
        }
        Ok(())
    }

    pub fn lookup(name: &str) -> Option<ExperimentConfig> {
        presets().into_iter().find(|(n, _)| *n == name).map(|(_, c)| c)
    }
}

/// Applies `a.b.c=value`; `value` is parsed as JSON, falling back to a string.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("override key {key:?}: {part:?} is not an index")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("override key {key:?}: index {idx} out of range")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("override key {key:?} descends into a scalar"))),
        };
    }
    Err(Error::Config(format!("empty override key in {assignment:?}")))
}

fn base(field: FieldSpec, ham: PowerLawHamiltonian) -> ExperimentConfig {
    let mut lattice = LatticeSpec::cube(1, 6.0, 1.0 / 32.0, 0.25, 2.0);
    lattice.subsamples = 2;
    ExperimentConfig {
        version: CONFIG_VERSION.into(),
        hamiltonian: ham,
        field,
        lattice,
        path_dt: 0.125,
        schedule: SubadditiveSchedule {
            horizons: vec![4.0, 8.0, 16.0, 32.0],
            samples: 128,
            velocities: (-4..=4).map(|i| vec![i as f64 * 0.5]).collect(),
        },
        p_grid: (-2..=2).map(|i| vec![i as f64 * 0.5]).collect(),
        eps_list: (2..=6).map(|k| 0.5f64.powi(k)).collect(),
        theta_list: vec![0.25, 0.5, 0.75],
        probes: vec![
            Probe { x: vec![0.0], y: vec![0.0], s: 0.0, t: 1.0 },
            Probe { x: vec![0.0], y: vec![0.5], s: 0.0, t: 1.0 },
        ],
        initial: InitialDatum::Bump { center: vec![0.0], radius: 1.0, height: 1.0 },
        hopf_lax: HopfLaxSection {
            resolution: LatticeResolution { h: 0.125, dt: 0.25, v_max: 4.0, subsamples: 2 },
            lower: vec![-1.0],
            upper: vec![1.0],
            radius: 1.0,
            stride: 1,
        },
        fd: Some(FdSection { grid: FdGrid { lower: vec![-3.0], upper: vec![3.0], h: 1.0 / 512.0 }, cfl: 0.5 }),
        tent: Some(TentOptions { m: 8.0, delta: 2.0, blocks: 4, samples: 128, path_dt: 0.125, subsamples: 2 }),
        scaling: Some(ScalingSection { x: vec![0.0], t: 1.0, samples: 128 }),
        tails: Some(TailsSection {
            r: 1.25,
            samples: 200,
            spacing: 0.125,
            times: vec![0.875, 1.0, 1.125, 1.25],
            theta_reg: 0.3,
        }),
        psi: Some(PsiSection { horizon: 1.0, samples: 20000, path_steps: 512 }),
        seed: 7,
        output: None,
    }
}

/// Shipped configurations: `single-mode` (the enhancement setting),
/// `constant` (no enhancement), `zero` (no noise) and `quartic` (q = 4).
pub fn presets() -> Vec<(&'static str, ExperimentConfig)> {
    let single = base(FieldSpec::single_mode(1.0, 1.0), PowerLawHamiltonian::quadratic());
    let mut constant = base(FieldSpec::constant(1, vec![0.7]), PowerLawHamiltonian::quadratic());
    constant.tent = None;
    let mut zero = base(FieldSpec::zero(1, 1), PowerLawHamiltonian::quadratic());
    zero.tent = None;
    let mut quartic = base(FieldSpec::single_mode(1.0, 1.0), PowerLawHamiltonian { q: 4.0, c: 1.0 });
    quartic.schedule.horizons = vec![4.0, 8.0, 16.0];
    quartic.schedule.samples = 64;
    quartic.schedule.velocities = (-4..=4).map(|i| vec![i as f64 * 0.25]).collect();
    vec![("single-mode", single), ("constant", constant), ("zero", zero), ("quartic", quartic)]
}
