//! Servo tick <-> joint angle mapping, tendon displacement and the wrist
//! command path (open loop, proportional).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wrist::{RangeOfMotion, WristState};

pub const TICK_MIN: i64 = 0;
pub const TICK_MAX: i64 = 4095;
/// 12-bit position resolution of the bus servos.
pub const TICK_RESOLUTION_RAD: f64 = 2.0 * PI / 4096.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServoRole {
    FingerFlex,
    FingerExt,
    WristDev,
    WristFlex,
}

impl ServoRole {
    pub const ALL: [ServoRole; 4] = [
        ServoRole::FingerFlex,
        ServoRole::FingerExt,
        ServoRole::WristDev,
        ServoRole::WristFlex,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ServoRole::FingerFlex => "finger_flex",
            ServoRole::FingerExt => "finger_ext",
            ServoRole::WristDev => "wrist_dev",
            ServoRole::WristFlex => "wrist_flex",
        }
    }
}

impl fmt::Display for ServoRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoCalibration {
    pub id: u8,
    pub role: ServoRole,
    pub center_ticks: i64,
    /// rad per tick; negative for a servo mounted the other way round.
    pub gain: f64,
}

impl ServoCalibration {
    pub fn new(id: u8, role: ServoRole, center_ticks: i64, gain: f64) -> Result<Self> {
        let cal = Self {
            id,
            role,
            center_ticks,
            gain,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain != 0.0) {
            return Err(Error::invalid(format!("{}: gain must be finite and non-zero", self.role)));
        }
        if !(TICK_MIN..=TICK_MAX).contains(&self.center_ticks) {
            return Err(Error::invalid(format!(
                "{}: centre {} outside [{TICK_MIN}, {TICK_MAX}]",
                self.role, self.center_ticks
            )));
        }
        Ok(())
    }
}

pub fn servo_to_angle(ticks: i64, cal: &ServoCalibration) -> Result<f64> {
    if !(TICK_MIN..=TICK_MAX).contains(&ticks) {
        return Err(Error::invalid(format!(
            "{}: tick {ticks} outside [{TICK_MIN}, {TICK_MAX}]",
            cal.role
        )));
    }
    Ok((ticks - cal.center_ticks) as f64 * cal.gain)
}

/// Nearest tick, halves rounded away from zero around the centre.
pub fn angle_to_servo(angle: f64, cal: &ServoCalibration) -> Result<i64> {
    let out_of_range = |tick: i64| Error::OutOfRange {
        joint: cal.role.to_string(),
        angle_rad: angle,
        tick,
        min: TICK_MIN,
        max: TICK_MAX,
    };
    if !angle.is_finite() {
        return Err(Error::invalid(format!("{}: angle must be finite", cal.role)));
    }
    let offset = (angle / cal.gain).round();
    if offset.abs() > 2.0 * (TICK_MAX as f64) {
        return Err(out_of_range(if offset > 0.0 { i64::MAX } else { i64::MIN }));
    }
    let tick = cal.center_ticks + offset as i64;
    if !(TICK_MIN..=TICK_MAX).contains(&tick) {
        return Err(out_of_range(tick));
    }
    Ok(tick)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    Sheathed,
    Unsheathed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionConfig {
    pub mode: CouplingMode,
    /// Finger-tendon displacement per rad of deviation and flexion (mm/rad),
    /// only in effect without sheaths.
    pub coupling_mm_per_rad: [f64; 2],
    pub cam_radius_mm: f64,
    pub spool_radius_mm: f64,
    /// Tendon travel from fully open to fully closed.
    pub full_stroke_mm: f64,
}

impl Default for TransmissionConfig {
    fn default() -> Self {
        Self {
            mode: CouplingMode::Sheathed,
            coupling_mm_per_rad: [2.0, 5.0],
            cam_radius_mm: 10.0,
            spool_radius_mm: 10.0,
            full_stroke_mm: 40.0,
        }
    }
}

impl TransmissionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cam_radius_mm > 0.0 && self.spool_radius_mm > 0.0) {
            return Err(Error::invalid("cam and spool radii must be positive"));
        }
        if !(self.full_stroke_mm.is_finite() && self.full_stroke_mm > 0.0) {
            return Err(Error::invalid("full stroke must be positive"));
        }
        if self.coupling_mm_per_rad.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("coupling coefficients must be finite"));
        }
        Ok(())
    }

    pub fn effective_coupling(&self) -> [f64; 2] {
        match self.mode {
            CouplingMode::Sheathed => [0.0, 0.0],
            CouplingMode::Unsheathed => self.coupling_mm_per_rad,
        }
    }

    /// Wrist servo gain implied by the cam and spool radii (rad/tick).
    pub fn wrist_gain(&self) -> f64 {
        self.spool_radius_mm / self.cam_radius_mm * TICK_RESOLUTION_RAD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TendonDisplacement {
    pub flexor_mm: f64,
    pub extensor_mm: f64,
}

pub fn finger_tendon_displacement(s: f64, w: &WristState, cfg: &TransmissionConfig) -> Result<TendonDisplacement> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(format!("synergy {s} outside [0, 1]")));
    }
    let [k1, k2] = cfg.effective_coupling();
    let wrist = k1 * w.theta1 + k2 * w.theta2;
    Ok(TendonDisplacement {
        flexor_mm: s * cfg.full_stroke_mm + wrist,
        extensor_mm: (1.0 - s) * cfg.full_stroke_mm - wrist,
    })
}

/// Calibrations for the four bus servos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub servo: Vec<ServoCalibration>,
}

impl CalibrationSet {
    pub fn shipped() -> Self {
        Self::from_toml(include_str!("../data/calibration.toml"), "shipped calibration")
            .expect("shipped calibration parses")
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let set: CalibrationSet = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        set.validate().map_err(|e| Error::parse(origin, e))?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for cal in &self.servo {
            cal.validate()?;
        }
        for role in ServoRole::ALL {
            if self.servo.iter().filter(|c| c.role == role).count() != 1 {
                return Err(Error::invalid(format!("calibration needs exactly one {role} servo")));
            }
        }
        for (i, a) in self.servo.iter().enumerate() {
            if self.servo[i + 1..].iter().any(|b| b.id == a.id) {
                return Err(Error::invalid(format!("servo id {} listed twice", a.id)));
            }
            if a.id > 253 {
                return Err(Error::invalid(format!("servo id {} is not addressable", a.id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, role: ServoRole) -> &ServoCalibration {
        self.servo.iter().find(|c| c.role == role).expect("validated set has every role")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WristTicks {
    pub deviation: i64,
    pub flexion: i64,
}

/// Tick targets for a desired wrist pose; rejected outside the range of motion.
pub fn wrist_command(desired: &WristState, calibs: &CalibrationSet) -> Result<WristTicks> {
    wrist_command_rom(desired, calibs, &RangeOfMotion::SHIPPED)
}

pub fn wrist_command_rom(desired: &WristState, calibs: &CalibrationSet, rom: &RangeOfMotion) -> Result<WristTicks> {
    if !(desired.theta1.is_finite() && desired.theta2.is_finite()) {
        return Err(Error::invalid("wrist command must be finite"));
    }
    if !rom.contains(&WristState::new(desired.theta1, 0.0)) {
        return Err(Error::RomViolation {
            limit: format!(
                "deviation {:.6} deg exceeds +/-{} deg",
                desired.theta1.to_degrees(),
                rom.deviation_deg
            ),
        });
    }
    if !rom.contains(&WristState::new(0.0, desired.theta2)) {
        return Err(Error::RomViolation {
            limit: format!(
                "flexion {:.6} deg exceeds +/-{} deg",
                desired.theta2.to_degrees(),
                rom.flexion_deg
            ),
        });
    }
    Ok(WristTicks {
        deviation: angle_to_servo(desired.theta1, calibs.get(ServoRole::WristDev))?,
        flexion: angle_to_servo(desired.theta2, calibs.get(ServoRole::WristFlex))?,
    })
}
