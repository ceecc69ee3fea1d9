//! Serial-chain kinematics with distal (standard) Denavit-Hartenberg rows.
//!
//! Each row maps frame `i-1` to frame `i` as
//!
//! ```text
//! T_i(q) = Rz(q + theta_offset) · Tz(d) · Tx(a) · Rx(alpha)
//! ```
//!
//! and a chain evaluates `base · T_1(q_1) · F_1 · T_2(q_2) · F_2 · ... · T_n(q_n) · F_n`,
//! where `F_i` is a fixed transform attached after row `i` (identity unless a
//! mount or tool offset is configured). Lengths are millimetres, angles radians.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform: orthonormal rotation plus translation (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Matrix3::identity(), Vector3::new(x, y, z))
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rotation(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rotation(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rotation of `angle` about a unit `axis` through the origin.
    pub fn rot_axis(axis: &Vector3<f64>, angle: f64) -> Self {
        let rot = Rotation3::from_scaled_axis(axis.normalize() * angle);
        Self::from_rotation(*rot.matrix())
    }

    /// Fixed-axis roll/pitch/yaw: `Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::rot_z(yaw) * Self::rot_y(pitch) * Self::rot_x(roll)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Same transform with the translation replaced.
    pub fn with_translation(&self, t: Vector3<f64>) -> Self {
        Self::new(self.rotation, t)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let rtr = r.transpose() * r;
        (rtr - Matrix3::identity()).amax() <= tol && (r.determinant() - 1.0).abs() <= tol
    }

    /// Component-wise comparison with an absolute tolerance.
    pub fn approx_eq(&self, other: &Transform, tol: f64) -> bool {
        (self.rotation - other.rotation).amax() <= tol
            && (self.translation - other.translation).amax() <= tol
    }

    /// Rotation vector (axis · angle, world frame) taking `self`'s orientation to `target`'s.
    pub fn orientation_error(&self, target: &Transform) -> Vector3<f64> {
        let delta = target.rotation * self.rotation.transpose();
        Rotation3::from_matrix_unchecked(delta).scaled_axis()
    }

    /// Angle (rad) between the orientations of two transforms.
    pub fn angle_to(&self, other: &Transform) -> f64 {
        self.orientation_error(other).norm()
    }
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        Transform::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl Mul<&Transform> for &Transform {
    type Output = Transform;

    fn mul(self, rhs: &Transform) -> Transform {
        *self * *rhs
    }
}

/// One distal Denavit-Hartenberg row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DHParam {
    /// Link length along x_i (mm).
    pub a: f64,
    /// Link twist about x_i (rad).
    pub alpha: f64,
    /// Link offset along z_{i-1} (mm).
    pub d: f64,
    /// Constant added to the joint variable (rad).
    pub theta_offset: f64,
}

/// Accepts (-π, π], with a rounding allowance at the closed end so that
/// values converted from degrees (180°) still pass.
fn in_half_open_pi(v: f64) -> bool {
    v > -PI && v <= PI + 1e-12
}

impl DHParam {
    pub fn new(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Result<Self> {
        let row = Self {
            a,
            alpha,
            d,
            theta_offset,
        };
        row.validate()?;
        Ok(row)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.alpha.is_finite() && self.d.is_finite() && self.theta_offset.is_finite()) {
            return Err(Error::invalid("DH row has a non-finite entry"));
        }
        if self.a < 0.0 {
            return Err(Error::invalid(format!("DH length a = {} must be non-negative", self.a)));
        }
        if !in_half_open_pi(self.alpha) || !in_half_open_pi(self.theta_offset) {
            return Err(Error::invalid(format!(
                "DH angles alpha = {}, theta_offset = {} must lie in (-pi, pi]",
                self.alpha, self.theta_offset
            )));
        }
        Ok(())
    }
}

/// `Rz(q + theta_offset) · Tz(d) · Tx(a) · Rx(alpha)`.
pub fn dh_transform(row: &DHParam, q: f64) -> Result<Transform> {
    if !q.is_finite() {
        return Err(Error::invalid("joint value is not finite"));
    }
    Ok(dh_matrix(row, q))
}

fn dh_matrix(row: &DHParam, q: f64) -> Transform {
    let (st, ct) = (q + row.theta_offset).sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    Transform::new(
        Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca),
        Vector3::new(row.a * ct, row.a * st, row.d),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn symmetric(half_span: f64) -> Self {
        Self::new(-half_span, half_span)
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.min && q <= self.max
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.min, self.max)
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Ordered serial chain of revolute joints.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    rows: Vec<DHParam>,
    limits: Vec<JointLimit>,
    speeds: Vec<f64>,
    base: Transform,
    /// Fixed transform applied after each row.
    fixed: Vec<Transform>,
}

impl KinematicChain {
    pub fn new(rows: Vec<DHParam>, limits: Vec<JointLimit>, speeds: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("kinematic chain needs at least one row"));
        }
        if limits.len() != rows.len() || speeds.len() != rows.len() {
            return Err(Error::invalid(format!(
                "chain has {} rows but {} limits and {} speeds",
                rows.len(),
                limits.len(),
                speeds.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            row.validate()
                .map_err(|e| Error::invalid(format!("joint {}: {e}", i + 1)))?;
            let lim = limits[i];
            if !(lim.min.is_finite() && lim.max.is_finite() && lim.min < lim.max) {
                return Err(Error::invalid(format!(
                    "joint {}: limits [{}, {}] must satisfy min < max",
                    i + 1,
                    lim.min,
                    lim.max
                )));
            }
            if !(speeds[i].is_finite() && speeds[i] > 0.0) {
                return Err(Error::invalid(format!("joint {}: speed must be positive", i + 1)));
            }
        }
        let fixed = vec![Transform::identity(); rows.len()];
        Ok(Self {
            rows,
            limits,
            speeds,
            base: Transform::identity(),
            fixed,
        })
    }

    /// Prepends a fixed transform in front of the first row.
    pub fn with_base(mut self, base: Transform) -> Self {
        self.base = base;
        self
    }

    /// Appends a fixed transform after the last row.
    pub fn with_tool(mut self, tool: Transform) -> Self {
        let last = self.fixed.len() - 1;
        self.fixed[last] = tool;
        self
    }

    pub fn with_limits(mut self, limits: Vec<JointLimit>) -> Result<Self> {
        let rebuilt = KinematicChain::new(self.rows.clone(), limits, self.speeds.clone())?;
        self.limits = rebuilt.limits;
        Ok(self)
    }

    pub fn dof(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[DHParam] {
        &self.rows
    }

    pub fn limits(&self) -> &[JointLimit] {
        &self.limits
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn base(&self) -> &Transform {
        &self.base
    }

    pub fn tool(&self) -> &Transform {
        &self.fixed[self.fixed.len() - 1]
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof() && q.iter().zip(&self.limits).all(|(v, l)| l.contains(*v))
    }

    fn check_joints(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::invalid(format!(
                "joint vector has {} entries, chain has {} joints",
                q.len(),
                self.dof()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("joint vector has a non-finite entry"));
        }
        Ok(())
    }

    /// Frames before each joint's rotation plus the distal frame.
    fn frames(&self, q: &[f64]) -> (Vec<Transform>, Transform) {
        let mut acc = self.base;
        let mut joint_frames = Vec::with_capacity(self.dof());
        for ((row, fixed), &qi) in self.rows.iter().zip(&self.fixed).zip(q) {
            joint_frames.push(acc);
            acc = acc * dh_matrix(row, qi) * *fixed;
        }
        (joint_frames, acc)
    }

    /// Geometric Jacobian (6×n) with the Jacobian evaluated at a known distal frame.
    fn jacobian_from_frames(joint_frames: &[Transform], tip: &Transform) -> DMatrix<f64> {
        let n = joint_frames.len();
        let mut jac = DMatrix::zeros(6, n);
        for (i, frame) in joint_frames.iter().enumerate() {
            let z = frame.rotation.column(2).into_owned();
            let lin = z.cross(&(tip.translation - frame.translation));
            for r in 0..3 {
                jac[(r, i)] = lin[r];
                jac[(r + 3, i)] = z[r];
            }
        }
        jac
    }

    pub(crate) fn fk_unchecked(&self, q: &[f64]) -> Transform {
        self.frames(q).1
    }

    pub(crate) fn fk_and_jacobian(&self, q: &[f64]) -> (Transform, DMatrix<f64>) {
        let (frames, tip) = self.frames(q);
        let jac = Self::jacobian_from_frames(&frames, &tip);
        (tip, jac)
    }

    /// Origins and z axes of every joint frame, in base coordinates.
    pub fn joint_axes(&self, q: &[f64]) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
        self.check_joints(q)?;
        let (frames, _) = self.frames(q);
        Ok(frames
            .iter()
            .map(|f| (f.translation, f.rotation.column(2).into_owned()))
            .collect())
    }
}

/// Base-to-distal transform of `chain` at joint vector `q`.
pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<Transform> {
    chain.check_joints(q)?;
    Ok(chain.fk_unchecked(q))
}

/// Geometric Jacobian of the distal frame origin, base coordinates.
///
/// Rows 0..3 are linear velocity (mm/rad), rows 3..6 angular velocity (rad/rad).
pub fn jacobian(chain: &KinematicChain, q: &[f64]) -> Result<DMatrix<f64>> {
    chain.check_joints(q)?;
    Ok(chain.fk_and_jacobian(q).1)
}

/// Serial concatenation: `proximal`'s tool frame becomes the base of `distal`.
pub fn compose_chains(proximal: &KinematicChain, distal: &KinematicChain) -> KinematicChain {
    let mut rows = proximal.rows.clone();
    rows.extend_from_slice(&distal.rows);
    let mut limits = proximal.limits.clone();
    limits.extend_from_slice(&distal.limits);
    let mut speeds = proximal.speeds.clone();
    speeds.extend_from_slice(&distal.speeds);
    let mut fixed = proximal.fixed.clone();
    let last = fixed.len() - 1;
    fixed[last] = fixed[last] * distal.base;
    fixed.extend_from_slice(&distal.fixed);
    KinematicChain {
        rows,
        limits,
        speeds,
        base: proximal.base,
        fixed,
    }
}
