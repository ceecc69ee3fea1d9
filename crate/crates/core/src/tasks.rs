//! The two manipulation experiments (disc rotation and cube stacking) run
//! with the wrist actuated or locked, plus report export and comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ik::{
    joint_travel, lift, solve_ik, time_proxy, track_trajectory, ConfigChangeEvent, IkOptions, TrackOptions,
    TrackResult, WorkspaceBounds,
};
use crate::kinematics::{JointLimit, KinematicChain, Transform};
use crate::report::{f6, f6_opt, f6_vec, f6_vec2, fmt6};
use crate::robot::Manipulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Rotation,
    Stacking,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Rotation => "rotation",
            TaskKind::Stacking => "stacking",
        }
    }
}

/// Rectangular work area on the table, in the arm base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bench {
    pub x_mm: [f64; 2],
    pub y_mm: [f64; 2],
    /// Extra clearance around the area allowed for approach and stacking moves.
    pub approach_margin_mm: f64,
    pub ceiling_mm: f64,
}

impl Bench {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x_mm[0] < self.x_mm[1]
            && self.y_mm[0] < self.y_mm[1]
            && self.approach_margin_mm >= 0.0
            && self.ceiling_mm > 0.0
            && self.x_mm.iter().chain(&self.y_mm).all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("bench needs increasing x/y ranges, a non-negative margin and a positive ceiling"))
        }
    }

    pub fn size_mm(&self) -> (f64, f64) {
        (self.x_mm[1] - self.x_mm[0], self.y_mm[1] - self.y_mm[0])
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        (self.x_mm[0]..=self.x_mm[1]).contains(&x) && (self.y_mm[0]..=self.y_mm[1]).contains(&y)
    }

    /// Box the tool centre has to stay in: the area grown by the margin, from
    /// the table plane up to the ceiling.
    pub fn bounds(&self) -> WorkspaceBounds {
        let m = self.approach_margin_mm;
        WorkspaceBounds {
            min: [self.x_mm[0] - m, self.y_mm[0] - m, 0.0],
            max: [self.x_mm[1] + m, self.y_mm[1] + m, self.ceiling_mm],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Clockwise,
    Anticlockwise,
}

impl Direction {
    /// Sign of the rotation about the upward table normal.
    pub fn sign(&self) -> f64 {
        match self {
            Direction::Clockwise => -1.0,
            Direction::Anticlockwise => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscSpec {
    pub diameter_mm: f64,
    pub thickness_mm: f64,
    pub center_mm: [f64; 2],
    pub rotation_deg: f64,
    pub direction: Direction,
    pub step_deg: f64,
    /// Palm-centre height above the table while holding the disc.
    pub grasp_height_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// about the table normal
    Yaw,
    /// about the base x axis
    Roll,
    /// about the base y axis
    Pitch,
}

impl Axis {
    pub fn rotation(&self, angle: f64) -> Transform {
        match self {
            Axis::Yaw => Transform::rot_z(angle),
            Axis::Roll => Transform::rot_x(angle),
            Axis::Pitch => Transform::rot_y(angle),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Yaw => "yaw",
            Axis::Roll => "roll",
            Axis::Pitch => "pitch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSpec {
    pub start_mm: [f64; 2],
    pub axis: Axis,
    /// Rotation needed to bring the cube into the stacking orientation.
    pub rotation_deg: f64,
    /// Centre of the cube once stacked.
    pub slot_mm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackingSpec {
    pub cube_size_mm: f64,
    pub lift_mm: f64,
    pub place_above_mm: f64,
    pub approach_samples: usize,
    pub lift_samples: usize,
    pub transit_samples: usize,
    pub return_samples: usize,
    #[serde(default)]
    pub cube: Vec<CubeSpec>,
}

/// Allowed excursion of one arm joint (1-based) around the task's reference
/// configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointWindow {
    pub joint: usize,
    pub min_deg: f64,
    pub max_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSetup {
    /// Initial guess for the reference configuration.
    pub seed_deg: Vec<f64>,
    /// Heading of the downward-pointing tool: `Rz(yaw) · Rx(180°)`.
    pub tool_yaw_deg: f64,
    /// Tool position of the stacking home pose.
    #[serde(default)]
    pub home_mm: Option<[f64; 3]>,
    #[serde(default)]
    pub window: Vec<JointWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WristSetup {
    /// Flexion held while grasping when the wrist is active.
    pub flexion_deg: f64,
    /// IK cost weight of both wrist joints relative to the arm joints.
    pub joint_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSettings {
    pub damping: f64,
    pub max_iters: usize,
    pub position_tol_mm: f64,
    pub orientation_tol_rad: f64,
    pub orientation_weight: f64,
    pub nullspace_weight: f64,
    pub limit_margin_deg: f64,
    pub singularity_threshold: f64,
    pub retry_limit: usize,
    pub retreat_mm: f64,
    pub regrasp_samples: usize,
    pub grasp_overhead_s: f64,
    pub grasp_synergy: f64,
    pub attach_synergy: f64,
    pub attach_radius_mm: f64,
    pub place_position_tol_mm: f64,
    pub place_orientation_tol_deg: f64,
}

impl PlannerSettings {
    fn ik(&self) -> IkOptions {
        IkOptions {
            damping: self.damping,
            max_iters: self.max_iters,
            position_tol: self.position_tol_mm,
            orientation_tol: self.orientation_tol_rad,
            orientation_weight: self.orientation_weight,
            nullspace_weight: self.nullspace_weight,
            ..IkOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskScenario {
    pub kind: TaskKind,
    pub bench: Bench,
    pub arm: ArmSetup,
    pub wrist: WristSetup,
    pub planner: PlannerSettings,
    #[serde(default)]
    pub disc: Option<DiscSpec>,
    #[serde(default)]
    pub stacking: Option<StackingSpec>,
}

impl TaskScenario {
    pub fn shipped(kind: TaskKind) -> Self {
        let (text, origin) = match kind {
            TaskKind::Rotation => (include_str!("../data/rotation.toml"), "shipped rotation scenario"),
            TaskKind::Stacking => (include_str!("../data/stacking.toml"), "shipped stacking scenario"),
        };
        Self::from_toml(text, origin).expect("shipped scenario parses")
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let s: TaskScenario = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        s.validate().map_err(|e| Error::parse(origin, e))?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.bench.validate()?;
        if self.arm.seed_deg.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("arm seed must be finite"));
        }
        for w in &self.arm.window {
            if w.joint == 0 || !(w.min_deg < w.max_deg) {
                return Err(Error::invalid(format!("joint window {w:?} is empty or unnumbered")));
            }
        }
        if !(self.wrist.joint_weight > 0.0) {
            return Err(Error::invalid("wrist joint weight must be positive"));
        }
        if !(0.0..=1.0).contains(&self.planner.attach_synergy) || !(0.0..=1.0).contains(&self.planner.grasp_synergy) {
            return Err(Error::invalid("synergy thresholds lie in [0, 1]"));
        }
        self.planner.ik().validate()?;
        match self.kind {
            TaskKind::Rotation => {
                let d = self
                    .disc
                    .as_ref()
                    .ok_or_else(|| Error::invalid("rotation scenario needs a [disc] table"))?;
                if !(d.diameter_mm > 0.0 && d.thickness_mm > 0.0 && d.step_deg > 0.0 && d.rotation_deg >= 0.0) {
                    return Err(Error::invalid("disc dimensions, step and rotation must be positive"));
                }
                if !self.bench.contains_xy(d.center_mm[0], d.center_mm[1]) {
                    return Err(Error::invalid("disc centre lies outside the bench"));
                }
            }
            TaskKind::Stacking => {
                let s = self
                    .stacking
                    .as_ref()
                    .ok_or_else(|| Error::invalid("stacking scenario needs a [stacking] table"))?;
                if self.arm.home_mm.is_none() {
                    return Err(Error::invalid("stacking scenario needs arm.home_mm"));
                }
                if !(s.cube_size_mm > 0.0) || s.approach_samples == 0 || s.lift_samples == 0 || s.transit_samples == 0
                {
                    return Err(Error::invalid("cube size and sample counts must be positive"));
                }
                for (i, c) in s.cube.iter().enumerate() {
                    if !self.bench.contains_xy(c.start_mm[0], c.start_mm[1]) {
                        return Err(Error::invalid(format!("cube {} starts outside the bench", i + 1)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Object rigidly held by the palm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspAttachment {
    pub object_id: usize,
    /// Object pose expressed in the palm frame.
    pub offset: Transform,
    pub attached: bool,
}

impl GraspAttachment {
    /// Attaches when the hand is closed far enough and the object centre is
    /// close to the palm centre.
    pub fn try_attach(
        object_id: usize,
        palm: &Transform,
        object: &Transform,
        synergy: f64,
        settings: &PlannerSettings,
    ) -> Self {
        let offset = palm.inverse() * *object;
        let attached =
            synergy >= settings.attach_synergy && offset.translation.norm() <= settings.attach_radius_mm + 1e-9;
        Self {
            object_id,
            offset,
            attached,
        }
    }

    pub fn object_pose(&self, palm: &Transform) -> Transform {
        *palm * self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: usize,
    pub cause: String,
    pub joint_index: Option<usize>,
    #[serde(serialize_with = "f6")]
    pub value: f64,
}

impl EventRecord {
    fn from_event(e: &ConfigChangeEvent, offset: usize) -> Self {
        let value = match e.cause {
            crate::ik::ChangeCause::JointLimit => e.value.to_degrees(),
            _ => e.value,
        };
        Self {
            step: e.step + offset,
            cause: e.cause.as_str().to_string(),
            joint_index: e.joint_index,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeOutcome {
    pub cube: usize,
    pub axis: Axis,
    #[serde(serialize_with = "f6")]
    pub rotation_deg: f64,
    pub attached: bool,
    pub reoriented: bool,
    pub stacked: bool,
    /// Angle between the released cube and the stacking orientation.
    #[serde(serialize_with = "f6")]
    pub orientation_error_deg: f64,
    #[serde(serialize_with = "f6")]
    pub position_error_mm: f64,
    /// Smallest angle between a cube face normal and the table normal.
    #[serde(serialize_with = "f6")]
    pub tilt_deg: f64,
    pub note: String,
}

/// Metrics of one task run. Angles in degrees, lengths in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub kind: TaskKind,
    pub wrist_enabled: bool,
    pub success: bool,
    pub aborted: bool,
    #[serde(serialize_with = "f6_opt")]
    pub rotation_achieved_deg: Option<f64>,
    pub cubes: Vec<CubeOutcome>,
    pub config_change_count: usize,
    pub events: Vec<EventRecord>,
    pub grasp_release_events: usize,
    #[serde(serialize_with = "f6_vec")]
    pub travel_cumulative_deg: Vec<f64>,
    #[serde(serialize_with = "f6_vec")]
    pub travel_max_deg: Vec<f64>,
    #[serde(serialize_with = "f6")]
    pub time_proxy_s: f64,
    #[serde(serialize_with = "f6_vec2")]
    pub joint_path_deg: Vec<Vec<f64>>,
    /// Tool pose per path entry: x, y, z (mm) and rotation vector (deg).
    #[serde(serialize_with = "f6_vec2")]
    pub tool_path: Vec<[f64; 6]>,
}

impl TaskReport {
    pub fn empty(kind: TaskKind, wrist_enabled: bool) -> Self {
        Self {
            kind,
            wrist_enabled,
            success: true,
            aborted: false,
            rotation_achieved_deg: None,
            cubes: vec![],
            config_change_count: 0,
            events: vec![],
            grasp_release_events: 0,
            travel_cumulative_deg: vec![],
            travel_max_deg: vec![],
            time_proxy_s: 0.0,
            joint_path_deg: vec![],
            tool_path: vec![],
        }
    }

    pub fn reoriented_count(&self) -> usize {
        self.cubes.iter().filter(|c| c.reoriented).count()
    }

    pub fn stacked_count(&self) -> usize {
        self.cubes.iter().filter(|c| c.stacked).count()
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e))
    }
}

/// Inputs shared by both tasks.
#[derive(Debug, Clone)]
pub struct TaskSetup {
    pub manipulator: Manipulator,
    pub scenario: TaskScenario,
}

impl TaskSetup {
    pub fn shipped(kind: TaskKind) -> Self {
        Self {
            manipulator: Manipulator::shipped(),
            scenario: TaskScenario::shipped(kind),
        }
    }
}

fn downward_tool(yaw_deg: f64, position: Vector3<f64>) -> Transform {
    let r = Transform::rot_z(yaw_deg.to_radians()) * Transform::rot_x(PI);
    Transform::new(r.rotation, position)
}

/// Pose interpolation: straight line for the position, constant-axis
/// rotation for the orientation.
fn lerp_pose(a: &Transform, b: &Transform, t: f64) -> Transform {
    let e = a.orientation_error(b);
    let r = if e.norm() > 1e-12 {
        Transform::rot_axis(&e, e.norm() * t).rotation * a.rotation
    } else {
        a.rotation
    };
    Transform::new(r, a.translation + (b.translation - a.translation) * t)
}

fn segment(a: &Transform, b: &Transform, samples: usize) -> Vec<Transform> {
    (1..=samples).map(|k| lerp_pose(a, b, k as f64 / samples as f64)).collect()
}

struct Runner<'a> {
    setup: &'a TaskSetup,
    wrist_enabled: bool,
    chain: KinematicChain,
    track: TrackOptions,
    arm_dof: usize,
}

impl<'a> Runner<'a> {
    fn new(setup: &'a TaskSetup, wrist_enabled: bool) -> Result<Self> {
        let sc = &setup.scenario;
        let m = &setup.manipulator;
        let arm_dof = m.arm_dof();
        if sc.arm.seed_deg.len() != arm_dof {
            return Err(Error::invalid(format!(
                "arm seed has {} values for a {arm_dof}-joint arm",
                sc.arm.seed_deg.len()
            )));
        }
        let mut ik = sc.planner.ik();
        let n = m.chain.dof();
        ik.joint_weights = (0..n).map(|j| if j < arm_dof { 1.0 } else { sc.wrist.joint_weight }).collect();
        if !wrist_enabled {
            ik.locked_joints = m.wrist_joints();
        }
        let track = TrackOptions {
            ik,
            limit_margin: sc.planner.limit_margin_deg.to_radians(),
            singularity_threshold: sc.planner.singularity_threshold,
            workspace: Some(sc.bench.bounds()),
            neutral: None,
            regrasp_retry_limit: sc.planner.retry_limit,
            rebase_on_regrasp: true,
            retreat_mm: sc.planner.retreat_mm,
            regrasp_samples: sc.planner.regrasp_samples,
        };
        Ok(Self {
            setup,
            wrist_enabled,
            chain: m.chain.clone(),
            track,
            arm_dof,
        })
    }

    /// Arm-only IK for `target` with the wrist held at `wrist`.
    fn reference(&self, target: &Transform, wrist: [f64; 2]) -> Result<Vec<f64>> {
        let m = &self.setup.manipulator;
        let seed_arm: Vec<f64> = self.setup.scenario.arm.seed_deg.iter().map(|d| d.to_radians()).collect();
        let seed = m.join(&seed_arm, wrist);
        let mut ik = self.track.ik.clone();
        ik.locked_joints = m.wrist_joints();
        ik.max_iters = ik.max_iters.max(1000);
        let sol = solve_ik(&self.chain, target, &seed, &ik)?;
        if !sol.converged {
            return Err(Error::invalid(format!(
                "reference pose unreachable from the configured seed (residual {} mm)",
                fmt6(sol.position_error)
            )));
        }
        Ok(sol.q)
    }

    /// Narrows the arm limits to the configured windows around `reference`.
    fn apply_windows(&mut self, reference: &[f64]) -> Result<()> {
        let mut limits = self.chain.limits().to_vec();
        for w in &self.setup.scenario.arm.window {
            if w.joint > self.arm_dof {
                return Err(Error::invalid(format!("window names joint {} of a {}-joint arm", w.joint, self.arm_dof)));
            }
            let j = w.joint - 1;
            let hw = limits[j];
            let lo = hw.min.max(reference[j] + w.min_deg.to_radians());
            let hi = hw.max.min(reference[j] + w.max_deg.to_radians());
            if !(lo < hi) {
                return Err(Error::invalid(format!("window on joint {} leaves no motion", w.joint)));
            }
            limits[j] = JointLimit::new(lo, hi);
        }
        self.chain = self.chain.clone().with_limits(limits)?;
        Ok(())
    }

    fn track(&self, poses: &[Transform], seed: &[f64], retry_limit: usize) -> Result<TrackResult> {
        let mut opts = self.track.clone();
        opts.regrasp_retry_limit = retry_limit;
        track_trajectory(&self.chain, poses, seed, &opts)
    }

    fn finish(&self, mut report: TaskReport, path: &[Vec<f64>]) -> Result<TaskReport> {
        if path.is_empty() {
            return Ok(report);
        }
        let travel = joint_travel(path)?;
        report.time_proxy_s = time_proxy(
            path,
            self.chain.speeds(),
            report.grasp_release_events,
            self.setup.scenario.planner.grasp_overhead_s,
        )?;
        report.travel_cumulative_deg = travel.cumulative.iter().map(|v| v.to_degrees()).collect();
        report.travel_max_deg = travel.max_excursion.iter().map(|v| v.to_degrees()).collect();
        report.joint_path_deg = path.iter().map(|q| q.iter().map(|v| v.to_degrees()).collect()).collect();
        report.tool_path = path
            .iter()
            .map(|q| {
                let t = crate::kinematics::forward_kinematics(&self.chain, q).expect("path entries fit the chain");
                let r = Transform::identity().orientation_error(&t);
                [
                    t.translation.x,
                    t.translation.y,
                    t.translation.z,
                    r.x.to_degrees(),
                    r.y.to_degrees(),
                    r.z.to_degrees(),
                ]
            })
            .collect();
        Ok(report)
    }

    fn wrist_hold(&self) -> [f64; 2] {
        if self.wrist_enabled {
            // held inside the tracker's limit margin so the grasp is a fixed point
            let lim = self.setup.manipulator.wrist.limits()[1];
            let margin = self.track.limit_margin;
            let flex = self.setup.scenario.wrist.flexion_deg.to_radians();
            [0.0, flex.clamp(lim.min + margin, lim.max - margin)]
        } else {
            [0.0, 0.0]
        }
    }
}

/// Rotates a disc about the table normal while holding it from above. A
/// joint running out of its window forces a release, untwist and regrasp.
pub fn run_rotation_task(wrist_enabled: bool, setup: &TaskSetup) -> Result<TaskReport> {
    let sc = &setup.scenario;
    if sc.kind != TaskKind::Rotation {
        return Err(Error::invalid("scenario is not a rotation task"));
    }
    sc.validate()?;
    let disc = sc.disc.as_ref().expect("validated");
    let mut runner = Runner::new(setup, wrist_enabled)?;
    let grasp = downward_tool(
        sc.arm.tool_yaw_deg,
        Vector3::new(disc.center_mm[0], disc.center_mm[1], disc.grasp_height_mm),
    );
    let q0 = runner.reference(&grasp, runner.wrist_hold())?;
    runner.apply_windows(&q0)?;
    runner.track.neutral = Some(q0.clone());

    let mut report = TaskReport::empty(TaskKind::Rotation, wrist_enabled);
    let disc_pose = Transform::new(
        Matrix3::identity(),
        Vector3::new(disc.center_mm[0], disc.center_mm[1], 0.5 * disc.thickness_mm),
    );
    let hold = GraspAttachment::try_attach(0, &grasp, &disc_pose, sc.planner.grasp_synergy, &sc.planner);
    if !hold.attached {
        report.success = false;
        report.aborted = true;
        report.rotation_achieved_deg = Some(0.0);
        return runner.finish(report, &[q0]);
    }

    let steps = (disc.rotation_deg / disc.step_deg).ceil() as usize;
    let sign = disc.direction.sign();
    let poses: Vec<Transform> = (0..=steps)
        .map(|k| {
            let angle = (k as f64 * disc.step_deg).min(disc.rotation_deg);
            let r = Transform::rot_z(sign * angle.to_radians());
            Transform::new(r.rotation * grasp.rotation, grasp.translation)
        })
        .collect();
    let result = runner.track(&poses, &q0, sc.planner.retry_limit)?;
    let regrasps = result.events.len() - usize::from(result.aborted);
    report.events = result.events.iter().map(|e| EventRecord::from_event(e, 0)).collect();
    report.config_change_count = result.events.len();
    report.aborted = result.aborted;
    report.success = !result.aborted && result.reached == poses.len();
    let achieved = if result.reached == 0 {
        0.0
    } else {
        ((result.reached - 1) as f64 * disc.step_deg).min(disc.rotation_deg)
    };
    report.rotation_achieved_deg = Some(achieved);
    report.grasp_release_events = 2 + 2 * regrasps;
    runner.finish(report, &result.path)
}

/// Angle (rad) between a cube's closest face normal and the table normal.
fn tilt(rotation: &Matrix3<f64>) -> f64 {
    let up = Vector3::z();
    (0..3)
        .map(|i| rotation.column(i).dot(&up).abs().clamp(0.0, 1.0).acos())
        .fold(f64::MAX, f64::min)
}

/// Picks six cubes, turns each by its required rotation and builds the stack.
/// A cube whose motion fails is still placed as well as possible and the run
/// moves on to the next cube.
pub fn run_stacking_task(wrist_enabled: bool, setup: &TaskSetup) -> Result<TaskReport> {
    let sc = &setup.scenario;
    if sc.kind != TaskKind::Stacking {
        return Err(Error::invalid("scenario is not a stacking task"));
    }
    sc.validate()?;
    let spec = sc.stacking.as_ref().expect("validated");
    let mut report = TaskReport::empty(TaskKind::Stacking, wrist_enabled);
    if spec.cube.is_empty() {
        return Ok(report);
    }
    let mut runner = Runner::new(setup, wrist_enabled)?;
    let home_mm = sc.arm.home_mm.expect("validated");
    let home_pose = downward_tool(sc.arm.tool_yaw_deg, Vector3::from(home_mm));
    let home = runner.reference(&home_pose, [0.0, 0.0])?;
    runner.apply_windows(&home)?;

    let half = 0.5 * spec.cube_size_mm;
    let mut path = vec![home.clone()];
    let mut q = home.clone();
    let extend = |path: &mut Vec<Vec<f64>>, r: &TrackResult| path.extend(r.path.iter().skip(1).cloned());
    let fk = |q: &[f64]| crate::kinematics::forward_kinematics(&runner.chain, q);

    for (i, cube) in spec.cube.iter().enumerate() {
        let required = cube.axis.rotation(cube.rotation_deg.to_radians());
        let start = Transform::new(
            required.inverse().rotation,
            Vector3::new(cube.start_mm[0], cube.start_mm[1], half),
        );
        let target = Transform::new(Matrix3::identity(), Vector3::from(cube.slot_mm));
        let grasp = home_pose.with_translation(start.translation + Vector3::new(0.0, 0.0, half));
        let mut outcome = CubeOutcome {
            cube: i + 1,
            axis: cube.axis,
            rotation_deg: cube.rotation_deg,
            attached: false,
            reoriented: false,
            stacked: false,
            orientation_error_deg: start.angle_to(&target).to_degrees(),
            position_error_mm: (start.translation - target.translation).norm(),
            tilt_deg: tilt(&start.rotation).to_degrees(),
            note: String::new(),
        };

        let from = fk(&q)?;
        let approach = runner.track(&segment(&from, &grasp, spec.approach_samples), &q, 0)?;
        extend(&mut path, &approach);
        q = approach.path.last().expect("path holds the seed").clone();
        let offset_events = path.len() - approach.path.len();
        report
            .events
            .extend(approach.events.iter().map(|e| EventRecord::from_event(e, offset_events)));

        if approach.aborted {
            outcome.note = format!("approach failed: {}", approach.events[0].cause.as_str());
        } else {
            let hold = GraspAttachment::try_attach(i, &grasp, &start, sc.planner.grasp_synergy, &sc.planner);
            if !hold.attached {
                outcome.note = "grasp did not attach".to_string();
            } else {
                outcome.attached = true;
                report.grasp_release_events += 2;
                let place = target * hold.offset.inverse();
                let lift_pick = grasp.with_translation(grasp.translation + Vector3::new(0.0, 0.0, spec.lift_mm));
                let above_place =
                    place.with_translation(place.translation + Vector3::new(0.0, 0.0, spec.place_above_mm));
                let mut carry = segment(&grasp, &lift_pick, spec.lift_samples);
                carry.extend(segment(&lift_pick, &above_place, spec.transit_samples));
                carry.extend(segment(&above_place, &place, spec.lift_samples));
                let moved = runner.track(&carry, &q, 0)?;
                let offset_events = path.len() - 1;
                extend(&mut path, &moved);
                q = moved.path.last().expect("path holds the seed").clone();
                report
                    .events
                    .extend(moved.events.iter().map(|e| EventRecord::from_event(e, offset_events)));
                let mut release_palm = fk(&q)?;
                if moved.aborted {
                    // keep whatever rotation was reached and set the cube down on the slot
                    let held = hold.object_pose(&release_palm);
                    let fallback = Transform::new(held.rotation, target.translation) * hold.offset.inverse();
                    let fallback_above =
                        fallback.with_translation(fallback.translation + Vector3::new(0.0, 0.0, spec.place_above_mm));
                    let mut poses = segment(&release_palm, &fallback_above, spec.lift_samples);
                    poses.extend(segment(&fallback_above, &fallback, spec.lift_samples));
                    let fb = runner.track(&poses, &q, 0)?;
                    let offset_events = path.len() - 1;
                    extend(&mut path, &fb);
                    q = fb.path.last().expect("path holds the seed").clone();
                    report
                        .events
                        .extend(fb.events.iter().map(|e| EventRecord::from_event(e, offset_events)));
                    release_palm = fk(&q)?;
                    outcome.note = if fb.aborted {
                        format!(
                            "reorientation stopped ({}); released in the air",
                            moved.events[0].cause.as_str()
                        )
                    } else {
                        format!("reorientation stopped ({}); placed as turned", moved.events[0].cause.as_str())
                    };
                }
                let released = hold.object_pose(&release_palm);
                outcome.orientation_error_deg = released.angle_to(&target).to_degrees();
                outcome.position_error_mm = (released.translation - target.translation).norm();
                outcome.tilt_deg = tilt(&released.rotation).to_degrees();
                outcome.reoriented = outcome.orientation_error_deg <= sc.planner.place_orientation_tol_deg;
                outcome.stacked = outcome.position_error_mm <= sc.planner.place_position_tol_mm
                    && outcome.tilt_deg <= sc.planner.place_orientation_tol_deg;

                let palm = fk(&q)?;
                let retreat = runner.track(&[lift(&palm, sc.planner.retreat_mm)], &q, 0)?;
                extend(&mut path, &retreat);
                q = retreat.path.last().expect("path holds the seed").clone();
            }
        }

        // joint-space return to home
        let samples = spec.return_samples.max(1);
        for k in 1..=samples {
            let t = k as f64 / samples as f64;
            path.push(q.iter().zip(&home).map(|(a, b)| a + t * (b - a)).collect());
        }
        q = home.clone();
        report.cubes.push(outcome);
    }

    report.config_change_count = report.events.len();
    report.success = report.cubes.iter().all(|c| c.reoriented && c.stacked);
    runner.finish(report, &path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub kind: TaskKind,
    /// Per joint, without wrist minus with wrist: positive means the joint
    /// moved more without the wrist.
    #[serde(serialize_with = "f6_vec")]
    pub travel_max_diff_deg: Vec<f64>,
    #[serde(serialize_with = "f6_vec")]
    pub travel_cumulative_diff_deg: Vec<f64>,
    /// with / without
    #[serde(serialize_with = "f6_opt")]
    pub time_proxy_ratio: Option<f64>,
    #[serde(serialize_with = "f6")]
    pub time_proxy_diff_s: f64,
    /// without minus with
    pub config_change_diff: i64,
    /// Joint 4 max travel, with / without.
    #[serde(serialize_with = "f6_opt")]
    pub joint4_max_ratio: Option<f64>,
    pub reoriented_diff: i64,
    pub stacked_diff: i64,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    if b.abs() > 1e-12 {
        Some(a / b)
    } else if a.abs() <= 1e-12 {
        Some(1.0)
    } else {
        None
    }
}

pub fn compare_conditions(with_wrist: &TaskReport, without_wrist: &TaskReport) -> Result<ComparisonReport> {
    if with_wrist.kind != without_wrist.kind {
        return Err(Error::invalid(format!(
            "cannot compare a {} report with a {} report",
            with_wrist.kind.as_str(),
            without_wrist.kind.as_str()
        )));
    }
    let diff = |a: &[f64], b: &[f64]| -> Result<Vec<f64>> {
        if a.len() != b.len() && !a.is_empty() && !b.is_empty() {
            return Err(Error::invalid("reports cover different numbers of joints"));
        }
        let n = a.len().max(b.len());
        Ok((0..n)
            .map(|j| b.get(j).copied().unwrap_or(0.0) - a.get(j).copied().unwrap_or(0.0))
            .collect())
    };
    let j4 = |r: &TaskReport| r.travel_max_deg.get(3).copied().unwrap_or(0.0);
    Ok(ComparisonReport {
        kind: with_wrist.kind,
        travel_max_diff_deg: diff(&with_wrist.travel_max_deg, &without_wrist.travel_max_deg)?,
        travel_cumulative_diff_deg: diff(&with_wrist.travel_cumulative_deg, &without_wrist.travel_cumulative_deg)?,
        time_proxy_ratio: ratio(with_wrist.time_proxy_s, without_wrist.time_proxy_s),
        time_proxy_diff_s: without_wrist.time_proxy_s - with_wrist.time_proxy_s,
        config_change_diff: without_wrist.config_change_count as i64 - with_wrist.config_change_count as i64,
        joint4_max_ratio: ratio(j4(with_wrist), j4(without_wrist)),
        reoriented_diff: without_wrist.reoriented_count() as i64 - with_wrist.reoriented_count() as i64,
        stacked_diff: without_wrist.stacked_count() as i64 - with_wrist.stacked_count() as i64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Svg => "svg",
        }
    }
}

/// Flat record table: events, cube outcomes, per-joint travel and summary
/// metrics. A report without a path or cubes yields only the header.
pub fn report_csv(report: &TaskReport) -> String {
    let mut out = String::from("record,index,name,value\n");
    for e in &report.events {
        let joint = e.joint_index.map(|j| format!(":j{j}")).unwrap_or_default();
        out.push_str(&format!("event,{},{}{joint},{}\n", e.step, e.cause, fmt6(e.value)));
    }
    for c in &report.cubes {
        out.push_str(&format!("cube,{},reoriented,{}\n", c.cube, u8::from(c.reoriented)));
        out.push_str(&format!("cube,{},stacked,{}\n", c.cube, u8::from(c.stacked)));
        out.push_str(&format!("cube,{},orientation_error_deg,{}\n", c.cube, fmt6(c.orientation_error_deg)));
        out.push_str(&format!("cube,{},position_error_mm,{}\n", c.cube, fmt6(c.position_error_mm)));
    }
    for (j, (cum, max)) in report.travel_cumulative_deg.iter().zip(&report.travel_max_deg).enumerate() {
        out.push_str(&format!("travel,{},cumulative_deg,{}\n", j + 1, fmt6(*cum)));
        out.push_str(&format!("travel,{},max_deg,{}\n", j + 1, fmt6(*max)));
    }
    if !report.joint_path_deg.is_empty() {
        out.push_str(&format!("summary,,config_change_count,{}\n", report.config_change_count));
        out.push_str(&format!("summary,,grasp_release_events,{}\n", report.grasp_release_events));
        out.push_str(&format!("summary,,time_proxy_s,{}\n", fmt6(report.time_proxy_s)));
        if let Some(a) = report.rotation_achieved_deg {
            out.push_str(&format!("summary,,rotation_achieved_deg,{}\n", fmt6(a)));
        }
        out.push_str(&format!("summary,,success,{}\n", u8::from(report.success)));
    }
    out
}

/// Joint path as `step,q1_deg,...`.
pub fn trajectory_csv(report: &TaskReport) -> String {
    let n = report.joint_path_deg.first().map_or(0, |q| q.len());
    let mut out = String::from("step");
    for j in 1..=n {
        out.push_str(&format!(",q{j}"));
    }
    out.push('\n');
    for (k, q) in report.joint_path_deg.iter().enumerate() {
        out.push_str(&k.to_string());
        for v in q {
            out.push(',');
            out.push_str(&fmt6(*v));
        }
        out.push('\n');
    }
    out
}

/// One JSON object per line: `{step, cause, joint_index}` plus the value.
pub fn events_jsonl(report: &TaskReport) -> Result<String> {
    let mut out = String::new();
    for e in &report.events {
        out.push_str(&serde_json::to_string(e).map_err(|e| Error::invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn report_json(report: &TaskReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Tool path projected on the table plane and on the vertical xz plane.
pub fn report_svg(report: &TaskReport) -> String {
    let xy: Vec<(f64, f64)> = report.tool_path.iter().map(|p| (p[0], p[1])).collect();
    let xz: Vec<(f64, f64)> = report.tool_path.iter().map(|p| (p[0], p[2])).collect();
    crate::svg::panels(&[("tool path xy", &xy, true), ("tool path xz", &xz, true)])
}

pub fn export_report(report: &TaskReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => Ok(report_csv(report)),
        ReportFormat::Json => report_json(report),
        ReportFormat::Svg => Ok(report_svg(report)),
    }
}

pub fn write_report(report: &TaskReport, format: ReportFormat, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, export_report(report, format)?)?;
    Ok(())
}

pub fn comparison_json(c: &ComparisonReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(c).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
