//! Wrist range of motion, hand constants, finger synergy and the palm-centre
//! workspace of the two-joint wrist.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, Transform};
use crate::robot::{wrist_chain, WRIST_DEVIATION_LIMIT_DEG, WRIST_FLEXION_LIMIT_DEG};

/// Wrist joint angles (rad). `theta1` is ulnar/radial deviation, `theta2`
/// flexion/extension.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WristState {
    pub theta1: f64,
    pub theta2: f64,
}

impl WristState {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2 }
    }

    pub fn from_degrees(theta1_deg: f64, theta2_deg: f64) -> Self {
        Self::new(theta1_deg.to_radians(), theta2_deg.to_radians())
    }
}

/// Symmetric range of motion in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeOfMotion {
    pub deviation_deg: f64,
    pub flexion_deg: f64,
}

impl RangeOfMotion {
    pub const SHIPPED: RangeOfMotion = RangeOfMotion {
        deviation_deg: WRIST_DEVIATION_LIMIT_DEG,
        flexion_deg: WRIST_FLEXION_LIMIT_DEG,
    };

    /// Deviation stops moved to the alternative bolt holes.
    pub const EXTENDED_DEVIATION: RangeOfMotion = RangeOfMotion {
        deviation_deg: 45.0,
        flexion_deg: WRIST_FLEXION_LIMIT_DEG,
    };

    pub fn contains(&self, w: &WristState) -> bool {
        // compare in degrees so the stated limits are inclusive despite rounding
        w.theta1.to_degrees().abs() <= self.deviation_deg + 1e-9
            && w.theta2.to_degrees().abs() <= self.flexion_deg + 1e-9
    }
}

impl Default for RangeOfMotion {
    fn default() -> Self {
        Self::SHIPPED
    }
}

pub fn validate_rom(w: &WristState) -> bool {
    RangeOfMotion::SHIPPED.contains(w)
}

/// Palm-centre pose in the wrist base frame. Limits are not enforced.
pub fn wrist_fk(w: &WristState) -> Transform {
    let chain = wrist_chain();
    forward_kinematics(&chain, &[w.theta1, w.theta2]).expect("two finite joint angles")
}

/// Finger names in the order used by [`HandGeometry::finger_base_angles_deg`].
pub const FINGERS: [&str; 5] = ["thumb", "index", "middle", "ring", "little"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HandGeometry {
    pub finger_length_mm: f64,
    pub hand_height_mm: f64,
    pub finger_base_angles_deg: [f64; 5],
    pub wrist_height_mm: f64,
    pub wrist_width_mm: f64,
    pub wrist_depth_mm: f64,
}

pub const HAND: HandGeometry = HandGeometry {
    finger_length_mm: 81.6,
    hand_height_mm: 164.6,
    finger_base_angles_deg: [-146.8, -10.0, 0.0, 8.0, 12.2],
    wrist_height_mm: 54.5,
    wrist_width_mm: 69.3,
    wrist_depth_mm: 41.0,
};

/// Per-joint maxima (deg) reached at full closure, shared by every finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynergyMaxima {
    pub mcp_deg: f64,
    pub pip_deg: f64,
    pub dip_deg: f64,
}

impl Default for SynergyMaxima {
    fn default() -> Self {
        Self {
            mcp_deg: 90.0,
            pip_deg: 100.0,
            dip_deg: 80.0,
        }
    }
}

/// Fifteen joint angles (rad), finger-major: thumb MCP, PIP, DIP, index MCP, ...
pub fn synergy_expand(s: f64) -> Result<[f64; 15]> {
    synergy_expand_with(s, &SynergyMaxima::default())
}

pub fn synergy_expand_with(s: f64, maxima: &SynergyMaxima) -> Result<[f64; 15]> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(format!("synergy {s} outside [0, 1]")));
    }
    let per_finger = [maxima.mcp_deg, maxima.pip_deg, maxima.dip_deg];
    let mut out = [0.0; 15];
    for (i, angle) in out.iter_mut().enumerate() {
        *angle = s * per_finger[i % 3].to_radians();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HandState {
    synergy: f64,
    joint_angles: [f64; 15],
}

impl HandState {
    pub fn new(synergy: f64) -> Result<Self> {
        Ok(Self {
            synergy,
            joint_angles: synergy_expand(synergy)?,
        })
    }

    pub fn synergy(&self) -> f64 {
        self.synergy
    }

    pub fn joint_angles(&self) -> &[f64; 15] {
        &self.joint_angles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkspacePoint {
    pub theta1_deg: f64,
    pub theta2_deg: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Angles from `-limit` to `limit` in steps of `step`, always ending on `limit`.
fn grid(limit: f64, step: f64) -> Vec<f64> {
    let n = (2.0 * limit / step - 1e-9).ceil() as usize;
    (0..=n).map(|k| (-limit + k as f64 * step).min(limit)).collect()
}

/// Palm-centre positions over the full ROM grid, sorted by (x, y, z).
pub fn palm_workspace(step_deg: f64) -> Result<Vec<WorkspacePoint>> {
    palm_workspace_rom(step_deg, &RangeOfMotion::SHIPPED)
}

pub fn palm_workspace_rom(step_deg: f64, rom: &RangeOfMotion) -> Result<Vec<WorkspacePoint>> {
    if !(step_deg > 0.0 && step_deg <= 10.0) {
        return Err(Error::invalid(format!("workspace step {step_deg} deg must lie in (0, 10]")));
    }
    let chain = wrist_chain();
    let mut points = Vec::new();
    for t1 in grid(rom.deviation_deg, step_deg) {
        for t2 in grid(rom.flexion_deg, step_deg) {
            let p = forward_kinematics(&chain, &[t1.to_radians(), t2.to_radians()])?.translation;
            points.push(WorkspacePoint {
                theta1_deg: t1,
                theta2_deg: t2,
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
    }
    points.sort_by(|a, b| {
        (a.x, a.y, a.z, a.theta1_deg, a.theta2_deg)
            .partial_cmp(&(b.x, b.y, b.z, b.theta1_deg, b.theta2_deg))
            .expect("finite workspace points")
    });
    Ok(points)
}

pub fn workspace_csv(points: &[WorkspacePoint]) -> String {
    let mut out = String::from("theta1_deg,theta2_deg,x_mm,y_mm,z_mm\n");
    for p in points {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            p.theta1_deg, p.theta2_deg, p.x, p.y, p.z
        ));
    }
    out
}

/// Two side-by-side orthographic projections (xy and xz) as dot plots.
pub fn workspace_svg(points: &[WorkspacePoint]) -> String {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    let xz: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.z)).collect();
    crate::svg::panels(&[("xy", &xy, false), ("xz", &xz, false)])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RomDirection {
    pub direction: &'static str,
    pub achieved_deg: f64,
    pub ideal_deg: f64,
    pub met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RomCoverage {
    pub directions: Vec<RomDirection>,
    /// The ideal values come as an unlabelled list; the direction order used
    /// here (flexion, extension, ulnar, radial) is an assumption.
    pub mapping_assumed: bool,
}

pub fn ideal_rom_coverage() -> RomCoverage {
    ideal_rom_coverage_for(&RangeOfMotion::SHIPPED)
}

pub fn ideal_rom_coverage_for(rom: &RangeOfMotion) -> RomCoverage {
    let rows = [
        ("flexion", rom.flexion_deg, 54.0),
        ("extension", rom.flexion_deg, 60.0),
        ("ulnar_deviation", rom.deviation_deg, 40.0),
        ("radial_deviation", rom.deviation_deg, 17.0),
    ];
    RomCoverage {
        directions: rows
            .iter()
            .map(|&(direction, achieved_deg, ideal_deg)| RomDirection {
                direction,
                achieved_deg,
                ideal_deg,
                met: achieved_deg >= ideal_deg,
            })
            .collect(),
        mapping_assumed: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn rom_examples() {
        assert!(validate_rom(&WristState::from_degrees(30.0, 90.0)));
        assert!(validate_rom(&WristState::default()));
        assert!(!validate_rom(&WristState::from_degrees(31.0, 0.0)));
        assert!(!validate_rom(&WristState::from_degrees(0.0, -90.5)));
    }

    #[test]
    fn wrist_fk_examples() {
        let p = wrist_fk(&WristState::default()).translation;
        assert!((p - Vector3::new(82.0, 0.0, 0.0)).amax() < 1e-9);
        let p = wrist_fk(&WristState::from_degrees(0.0, -90.0)).translation;
        assert!((p - Vector3::new(34.0, 0.0, -48.0)).amax() < 1e-9);
        let c = 30f64.to_radians();
        let p = wrist_fk(&WristState::new(c, 0.0)).translation;
        assert!((p - Vector3::new(82.0 * c.cos(), 82.0 * c.sin(), 0.0)).amax() < 1e-9);
    }

    #[test]
    fn synergy_endpoints() {
        assert_eq!(synergy_expand(0.0).unwrap(), [0.0; 15]);
        let closed = synergy_expand(1.0).unwrap();
        for f in 0..5 {
            assert!((closed[3 * f] - 90f64.to_radians()).abs() < 1e-15);
            assert!((closed[3 * f + 1] - 100f64.to_radians()).abs() < 1e-15);
            assert!((closed[3 * f + 2] - 80f64.to_radians()).abs() < 1e-15);
        }
        let half = synergy_expand(0.5).unwrap();
        for i in 0..15 {
            assert_eq!(half[i], 0.5 * closed[i]);
        }
        assert!(synergy_expand(1.01).is_err());
        assert!(synergy_expand(-0.01).is_err());
        assert!(synergy_expand(f64::NAN).is_err());
    }

    #[test]
    fn hand_state_matches_expansion() {
        let h = HandState::new(0.7).unwrap();
        assert_eq!(h.joint_angles(), &synergy_expand(0.7).unwrap());
    }

    #[test]
    fn workspace_grid_size_and_extremes() {
        let pts = palm_workspace(5.0).unwrap();
        assert_eq!(pts.len(), 13 * 37);
        let max_norm = pts.iter().map(|p| (p.x * p.x + p.y * p.y + p.z * p.z).sqrt()).fold(0.0, f64::max);
        assert!((max_norm - 82.0).abs() < 1e-9);
        let zmin = pts.iter().map(|p| p.z).fold(f64::MAX, f64::min);
        let zmax = pts.iter().map(|p| p.z).fold(f64::MIN, f64::max);
        assert!((zmin + 48.0).abs() < 1e-9 && (zmax - 48.0).abs() < 1e-9);
    }

    #[test]
    fn workspace_coarse_step_hits_endpoints() {
        let pts = palm_workspace(10.0).unwrap();
        let at = |t1: f64, t2: f64| pts.iter().find(|p| p.theta1_deg == t1 && p.theta2_deg == t2).unwrap();
        let p = at(0.0, 90.0);
        assert!((Vector3::new(p.x, p.y, p.z) - Vector3::new(34.0, 0.0, 48.0)).amax() < 1e-9);
        let p = at(0.0, -90.0);
        assert!((Vector3::new(p.x, p.y, p.z) - Vector3::new(34.0, 0.0, -48.0)).amax() < 1e-9);
    }

    #[test]
    fn workspace_step_bounds() {
        assert!(palm_workspace(0.0).is_err());
        assert!(palm_workspace(10.5).is_err());
        assert!(palm_workspace(f64::NAN).is_err());
        // a step that does not divide the range still ends on the limit
        let pts = palm_workspace(7.0).unwrap();
        assert!(pts.iter().any(|p| p.theta1_deg == 30.0 && p.theta2_deg == 90.0));
    }

    #[test]
    fn workspace_is_sorted() {
        let pts = palm_workspace(10.0).unwrap();
        for w in pts.windows(2) {
            assert!((w[0].x, w[0].y, w[0].z) <= (w[1].x, w[1].y, w[1].z));
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let pts = palm_workspace(10.0).unwrap();
        let csv = workspace_csv(&pts);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("theta1_deg,theta2_deg,x_mm,y_mm,z_mm"));
        assert_eq!(lines.count(), pts.len());
    }

    #[test]
    fn rom_coverage() {
        let r = ideal_rom_coverage();
        let met: Vec<_> = r.directions.iter().map(|d| (d.direction, d.met)).collect();
        assert_eq!(
            met,
            vec![
                ("flexion", true),
                ("extension", true),
                ("ulnar_deviation", false),
                ("radial_deviation", true)
            ]
        );
        assert!(r.mapping_assumed);
        let wide = ideal_rom_coverage_for(&RangeOfMotion::EXTENDED_DEVIATION);
        assert!(wide.directions.iter().all(|d| d.met));
    }

    #[test]
    fn finger_angles_distinct() {
        let a = HAND.finger_base_angles_deg;
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(a[i], a[j]);
            }
        }
    }
}
