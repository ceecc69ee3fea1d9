//! Shipped chain definitions and the arm + forearm + wrist assembly.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::{compose_chains, DHParam, JointLimit, KinematicChain, Transform};

/// Wrist DH table: deviation joint (a = 34 mm, α = π/2) then flexion joint
/// (a = 48 mm to the palm centre).
pub fn wrist_rows() -> Vec<DHParam> {
    vec![
        DHParam {
            a: 34.0,
            alpha: FRAC_PI_2,
            d: 0.0,
            theta_offset: 0.0,
        },
        DHParam {
            a: 48.0,
            alpha: 0.0,
            d: 0.0,
            theta_offset: 0.0,
        },
    ]
}

pub const WRIST_DEVIATION_LIMIT_DEG: f64 = 30.0;
pub const WRIST_FLEXION_LIMIT_DEG: f64 = 90.0;
/// Joint speed of both wrist joints (deg/s); servo no-load speed through a 1:1 cam.
pub const WRIST_SPEED_DEG_S: f64 = 120.0;

pub fn wrist_chain() -> KinematicChain {
    KinematicChain::new(
        wrist_rows(),
        vec![
            JointLimit::symmetric(WRIST_DEVIATION_LIMIT_DEG.to_radians()),
            JointLimit::symmetric(WRIST_FLEXION_LIMIT_DEG.to_radians()),
        ],
        vec![WRIST_SPEED_DEG_S.to_radians(); 2],
    )
    .expect("wrist table is valid")
}

/// UR5 kinematics from the manufacturer's sheet, rewritten with non-negative
/// link lengths: the published `a2 = -425`, `a3 = -392.25` become positive
/// lengths with a half-turn offset on joints 2 and 4, which yields the same
/// flange pose for every joint vector.
pub fn ur5_rows() -> Vec<DHParam> {
    let row = |a, alpha, d, theta_offset| DHParam {
        a,
        alpha,
        d,
        theta_offset,
    };
    vec![
        row(0.0, FRAC_PI_2, 89.159, 0.0),
        row(425.0, 0.0, 0.0, PI),
        row(392.25, 0.0, 0.0, 0.0),
        row(0.0, FRAC_PI_2, 109.15, PI),
        row(0.0, -FRAC_PI_2, 94.65, 0.0),
        row(0.0, 0.0, 82.3, 0.0),
    ]
}

pub fn ur5_chain() -> KinematicChain {
    KinematicChain::new(
        ur5_rows(),
        vec![JointLimit::symmetric(2.0 * PI); 6],
        vec![180f64.to_radians(); 6],
    )
    .expect("ur5 table is valid")
}

/// Flange-to-wrist-base mount: the wrist base x axis (the hand's pointing
/// direction at neutral) runs along the flange z axis and the deviation axis
/// along the flange y axis, `forearm_mm` out from the flange.
pub fn forearm_mount(forearm_mm: f64) -> Transform {
    let rot = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
    Transform::new(rot, nalgebra::Vector3::new(0.0, 0.0, forearm_mm))
}

/// Palm-frame to tool-frame rotation chosen so the tool frame is parallel to
/// the flange frame with the wrist at neutral: tool z points out of the palm.
pub fn palm_tool() -> Transform {
    let mount = forearm_mount(0.0);
    (mount * Transform::rot_x(FRAC_PI_2)).inverse()
}

/// Distance from the flange to the wrist's deviation axis (mm). Not a measured
/// value of the hardware; configurable.
pub const DEFAULT_FOREARM_MM: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountConfig {
    pub forearm_mm: f64,
}

impl Default for MountConfig {
    fn default() -> Self {
        Self {
            forearm_mm: DEFAULT_FOREARM_MM,
        }
    }
}

/// Arm, forearm mount and wrist as one 8-joint chain ending at the palm tool frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Manipulator {
    pub arm: KinematicChain,
    pub wrist: KinematicChain,
    pub mount: Transform,
    pub tool: Transform,
    pub chain: KinematicChain,
}

impl Manipulator {
    pub fn new(arm: KinematicChain, wrist: KinematicChain, forearm_mm: f64) -> Result<Self> {
        let mount = forearm_mount(forearm_mm);
        let tool = palm_tool();
        let chain = compose_chains(&arm, &wrist.clone().with_base(mount).with_tool(tool));
        Ok(Self {
            arm,
            wrist,
            mount,
            tool,
            chain,
        })
    }

    pub fn shipped() -> Self {
        Self::new(ur5_chain(), wrist_chain(), DEFAULT_FOREARM_MM).expect("shipped chains are valid")
    }

    pub fn arm_dof(&self) -> usize {
        self.arm.dof()
    }

    /// Joint indices of the wrist inside the composite chain.
    pub fn wrist_joints(&self) -> Vec<usize> {
        (self.arm.dof()..self.chain.dof()).collect()
    }

    /// Joint vector with the wrist appended.
    pub fn join(&self, arm_q: &[f64], wrist_q: [f64; 2]) -> Vec<f64> {
        let mut q = arm_q.to_vec();
        q.extend_from_slice(&wrist_q);
        q
    }
}

/// Distance from the shoulder (origin of frame 1) to the flange with every
/// joint at zero, which stretches the UR-style arm out horizontally.
pub fn arm_forward_reach(arm: &KinematicChain) -> f64 {
    let q = vec![0.0; arm.dof()];
    let shoulder = crate::kinematics::dh_transform(&arm.rows()[0], 0.0)
        .map(|t| (*arm.base() * t).translation)
        .unwrap_or_default();
    let flange = arm.fk_unchecked(&q).translation;
    (flange - shoulder).norm()
}
