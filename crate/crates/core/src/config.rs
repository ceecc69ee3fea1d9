//! Chain definition files and the top-level run configuration.
//!
//! A chain file is TOML with one `[[row]]` table per joint:
//!
//! ```toml
//! name = "wrist"
//! [[row]]
//! a = 34.0                # mm
//! alpha_deg = 90.0
//! d = 0.0                 # mm
//! theta_offset_deg = 0.0
//! limit_min_deg = -30.0
//! limit_max_deg = 30.0
//! speed_deg_s = 120.0
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{DHParam, JointLimit, KinematicChain};
use crate::robot::{self, Manipulator, DEFAULT_FOREARM_MM};
use crate::tasks::{TaskKind, TaskScenario, TaskSetup};
use crate::transmission::CalibrationSet;

pub const SHIPPED_ARM: &str = include_str!("../data/ur5.toml");
pub const SHIPPED_WRIST: &str = include_str!("../data/wrist.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRow {
    pub a: f64,
    pub alpha_deg: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset_deg: f64,
    pub limit_min_deg: f64,
    pub limit_max_deg: f64,
    pub speed_deg_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    #[serde(default)]
    pub name: String,
    pub row: Vec<ChainRow>,
}

// 180 deg should land on pi exactly, not one ulp past it
fn angle(deg: f64) -> f64 {
    let r = deg.to_radians();
    if (r.abs() - std::f64::consts::PI).abs() < 1e-12 {
        std::f64::consts::PI.copysign(r)
    } else {
        r
    }
}

impl ChainFile {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(origin, e))
    }

    pub fn to_chain(&self) -> Result<KinematicChain> {
        let mut rows = Vec::with_capacity(self.row.len());
        let mut limits = Vec::with_capacity(self.row.len());
        let mut speeds = Vec::with_capacity(self.row.len());
        for (i, r) in self.row.iter().enumerate() {
            let row = DHParam::new(r.a, angle(r.alpha_deg), r.d, angle(r.theta_offset_deg))
                .map_err(|e| Error::invalid(format!("row {}: {e}", i + 1)))?;
            rows.push(row);
            limits.push(JointLimit::new(r.limit_min_deg.to_radians(), r.limit_max_deg.to_radians()));
            speeds.push(r.speed_deg_s.to_radians());
        }
        KinematicChain::new(rows, limits, speeds)
    }
}

pub fn load_chain_str(text: &str, origin: &str) -> Result<KinematicChain> {
    ChainFile::from_toml(text, origin)?
        .to_chain()
        .map_err(|e| Error::parse(origin, e))
}

pub fn load_chain(path: &Path) -> Result<KinematicChain> {
    load_chain_str(&read(path)?, &path.display().to_string())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::parse(path.display().to_string(), e))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRefs {
    pub arm: Option<PathBuf>,
    pub wrist: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub rotation: Option<PathBuf>,
    pub stacking: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_forearm")]
    forearm_mm: f64,
    #[serde(default)]
    seed_jitter_deg: f64,
    #[serde(default)]
    files: FileRefs,
}

fn default_forearm() -> f64 {
    DEFAULT_FOREARM_MM
}

/// Everything a command needs, loaded and validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub arm: KinematicChain,
    pub wrist: KinematicChain,
    pub forearm_mm: f64,
    pub calibration: CalibrationSet,
    pub rotation: TaskScenario,
    pub stacking: TaskScenario,
    pub seed: u64,
    pub seed_jitter_deg: f64,
}

impl RunConfig {
    pub fn shipped() -> Self {
        Self {
            arm: robot::ur5_chain(),
            wrist: robot::wrist_chain(),
            forearm_mm: DEFAULT_FOREARM_MM,
            calibration: CalibrationSet::shipped(),
            rotation: TaskScenario::shipped(TaskKind::Rotation),
            stacking: TaskScenario::shipped(TaskKind::Stacking),
            seed: 0,
            seed_jitter_deg: 0.0,
        }
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let file: ConfigFile = toml::from_str(&read(path)?).map_err(|e| Error::parse(&origin, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Option<PathBuf>| p.as_ref().map(|p| dir.join(p));

        let mut cfg = Self::shipped();
        cfg.seed = file.seed;
        cfg.forearm_mm = file.forearm_mm;
        cfg.seed_jitter_deg = file.seed_jitter_deg;
        if let Some(p) = resolve(&file.files.arm) {
            cfg.arm = load_chain(&p)?;
        }
        if let Some(p) = resolve(&file.files.wrist) {
            cfg.wrist = load_chain(&p)?;
        }
        if let Some(p) = resolve(&file.files.calibration) {
            cfg.calibration = CalibrationSet::from_toml(&read(&p)?, &p.display().to_string())?;
        }
        if let Some(p) = resolve(&file.files.rotation) {
            cfg.rotation = TaskScenario::from_toml(&read(&p)?, &p.display().to_string())?;
        }
        if let Some(p) = resolve(&file.files.stacking) {
            cfg.stacking = TaskScenario::from_toml(&read(&p)?, &p.display().to_string())?;
        }
        cfg.validate().map_err(|e| Error::parse(&origin, e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wrist.dof() != 2 {
            return Err(Error::invalid(format!("wrist chain has {} joints, expected 2", self.wrist.dof())));
        }
        if !(self.forearm_mm.is_finite() && self.forearm_mm >= 0.0) {
            return Err(Error::invalid("forearm_mm must be finite and non-negative"));
        }
        if !(self.seed_jitter_deg.is_finite() && self.seed_jitter_deg >= 0.0) {
            return Err(Error::invalid("seed_jitter_deg must be finite and non-negative"));
        }
        if self.rotation.kind != TaskKind::Rotation {
            return Err(Error::invalid("rotation scenario has the wrong kind"));
        }
        if self.stacking.kind != TaskKind::Stacking {
            return Err(Error::invalid("stacking scenario has the wrong kind"));
        }
        self.calibration.validate()
    }

    pub fn manipulator(&self) -> Result<Manipulator> {
        Manipulator::new(self.arm.clone(), self.wrist.clone(), self.forearm_mm)
    }

    /// Task inputs with the IK seed configuration jittered from `seed`.
    pub fn task_setup(&self, kind: TaskKind) -> Result<TaskSetup> {
        let mut scenario = match kind {
            TaskKind::Rotation => self.rotation.clone(),
            TaskKind::Stacking => self.stacking.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        if self.seed_jitter_deg > 0.0 {
            for q in &mut scenario.arm.seed_deg {
                *q += rng.gen_range(-self.seed_jitter_deg..=self.seed_jitter_deg);
            }
        }
        Ok(TaskSetup {
            manipulator: self.manipulator()?,
            scenario,
        })
    }
}
