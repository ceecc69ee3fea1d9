//! Damped-least-squares inverse kinematics, trajectory tracking and the
//! configuration-change (regrasp) bookkeeping used by the task harness.

use nalgebra::{DMatrix, DVector, Vector3, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointLimit, KinematicChain, Transform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkOptions {
    /// Damping λ in `Jᵀ(JJᵀ + λ²I)⁻¹`.
    pub damping: f64,
    pub max_iters: usize,
    /// mm
    pub position_tol: f64,
    /// rad
    pub orientation_tol: f64,
    /// Scale applied to orientation rows (rad → mm-equivalent).
    pub orientation_weight: f64,
    /// Gain of the null-space pull toward the seed.
    pub nullspace_weight: f64,
    /// Largest joint update per iteration (rad).
    pub max_step: f64,
    /// Joints held at their seed value.
    pub locked_joints: Vec<usize>,
    /// Per-joint motion cost; larger values make a joint move less. Empty
    /// means uniform.
    pub joint_weights: Vec<f64>,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            damping: 1.0,
            max_iters: 200,
            position_tol: 0.1,
            orientation_tol: 1e-3,
            orientation_weight: 100.0,
            nullspace_weight: 0.1,
            max_step: 0.2,
            locked_joints: Vec::new(),
            joint_weights: Vec::new(),
        }
    }
}

impl IkOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.position_tol > 0.0 && self.orientation_tol > 0.0) {
            return Err(Error::invalid("IK damping and tolerances must be positive"));
        }
        if !(self.orientation_weight > 0.0 && self.max_step > 0.0 && self.nullspace_weight >= 0.0) {
            return Err(Error::invalid("IK weights and step bound must be positive"));
        }
        if self.joint_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("joint weights must be positive"));
        }
        Ok(())
    }
}

/// Result of one IK solve. Infeasibility is reported through `converged`.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
    /// Unlocked joints pinned at a limit when the solver stopped.
    pub saturated: Vec<usize>,
}

fn pose_error(current: &Transform, target: &Transform) -> (Vector3<f64>, Vector3<f64>) {
    (
        target.translation - current.translation,
        current.orientation_error(target),
    )
}

fn weighted_error(dp: &Vector3<f64>, dw: &Vector3<f64>, w: f64) -> DVector<f64> {
    DVector::from_iterator(6, dp.iter().copied().chain(dw.iter().map(|v| v * w)))
}

/// Solves for joints placing the chain's distal frame at `target`.
///
/// Iterates `Δq = Jᵀ(JJᵀ + λ²I)⁻¹ e` over the unlocked joints, adding a
/// null-space pull toward `seed`. Joints that would cross a limit are clamped
/// and dropped from the active set for the rest of that iteration.
pub fn solve_ik(chain: &KinematicChain, target: &Transform, seed: &[f64], opts: &IkOptions) -> Result<IkSolution> {
    opts.validate()?;
    if seed.len() != chain.dof() {
        return Err(Error::invalid(format!(
            "seed has {} entries, chain has {} joints",
            seed.len(),
            chain.dof()
        )));
    }
    if !target.is_finite() || seed.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("IK target and seed must be finite"));
    }
    if !chain.within_limits(seed) {
        return Err(Error::invalid("IK seed lies outside the joint limits"));
    }
    if let Some(&bad) = opts.locked_joints.iter().find(|&&j| j >= chain.dof()) {
        return Err(Error::invalid(format!("locked joint index {bad} out of range")));
    }
    if !opts.joint_weights.is_empty() && opts.joint_weights.len() != chain.dof() {
        return Err(Error::invalid("joint weight list has the wrong length"));
    }

    let n = chain.dof();
    let limits = chain.limits();
    let unlocked: Vec<usize> = (0..n).filter(|j| !opts.locked_joints.contains(j)).collect();
    let w = opts.orientation_weight;
    let lambda2 = opts.damping * opts.damping;
    let inv_weight: Vec<f64> = if opts.joint_weights.is_empty() {
        vec![1.0; n]
    } else {
        opts.joint_weights.iter().map(|w| 1.0 / w).collect()
    };

    let mut q = seed.to_vec();
    let mut saturated = Vec::new();
    for iter in 0..=opts.max_iters {
        let (tip, jac) = chain.fk_and_jacobian(&q);
        let (dp, dw) = pose_error(&tip, target);
        if dp.norm() < opts.position_tol && dw.norm() < opts.orientation_tol {
            return Ok(IkSolution {
                q,
                converged: true,
                iterations: iter,
                position_error: dp.norm(),
                orientation_error: dw.norm(),
                saturated,
            });
        }
        if iter == opts.max_iters {
            return Ok(IkSolution {
                q,
                converged: false,
                iterations: iter,
                position_error: dp.norm(),
                orientation_error: dw.norm(),
                saturated,
            });
        }
        let err = weighted_error(&dp, &dw, w);
        let mut active = unlocked.clone();
        saturated.clear();
        loop {
            let problem = StepProblem {
                jac: &jac,
                err: &err,
                active: &active,
                inv_weight: &inv_weight,
                orientation_weight: w,
                lambda2,
            };
            let Some(step) = problem.solve(&q, seed, opts.nullspace_weight) else {
                break;
            };
            let largest = step.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let scale = if largest > opts.max_step { opts.max_step / largest } else { 1.0 };
            let mut hit = Vec::new();
            for (k, &j) in active.iter().enumerate() {
                let next = q[j] + scale * step[k];
                if !limits[j].contains(next) {
                    hit.push(j);
                }
            }
            if hit.is_empty() {
                for (k, &j) in active.iter().enumerate() {
                    q[j] += scale * step[k];
                }
                break;
            }
            for &j in &hit {
                let dir = step[active.iter().position(|&a| a == j).unwrap()];
                q[j] = if dir > 0.0 { limits[j].max } else { limits[j].min };
                saturated.push(j);
            }
            active.retain(|j| !hit.contains(j));
            if active.is_empty() {
                break;
            }
        }
        saturated.sort_unstable();
    }
    unreachable!("loop returns on the final iteration")
}

struct StepProblem<'a> {
    jac: &'a DMatrix<f64>,
    err: &'a DVector<f64>,
    active: &'a [usize],
    inv_weight: &'a [f64],
    orientation_weight: f64,
    lambda2: f64,
}

impl StepProblem<'_> {
    /// Weighted damped step `W⁻¹Jᵀ(JW⁻¹Jᵀ + λ²I)⁻¹e` plus the seed pull projected
    /// into the (weighted) null space.
    fn solve(&self, q: &[f64], seed: &[f64], null_gain: f64) -> Option<DVector<f64>> {
        let m = self.active.len();
        let mut ja = DMatrix::zeros(6, m);
        for (k, &j) in self.active.iter().enumerate() {
            for r in 0..6 {
                let scale = if r < 3 { 1.0 } else { self.orientation_weight };
                ja[(r, k)] = scale * self.jac[(r, j)];
            }
        }
        let winv = DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            self.active.iter().map(|&j| self.inv_weight[j]),
        ));
        let gram = &ja * &winv * ja.transpose() + DMatrix::identity(6, 6) * self.lambda2;
        let chol = gram.cholesky()?;
        let pinv = &winv * ja.transpose() * chol.inverse();
        let mut step = &pinv * self.err;
        if null_gain > 0.0 {
            let pull = DVector::from_iterator(m, self.active.iter().map(|&j| null_gain * (seed[j] - q[j])));
            let projector = DMatrix::identity(m, m) - &pinv * &ja;
            step += projector * pull;
        }
        Some(step)
    }
}

/// Yoshikawa manipulability `sqrt(det(J·Jᵀ))` of a 6×n Jacobian, n ≥ 6.
///
/// Evaluated as the product of singular values so rank-deficient matrices
/// land at (numerically) zero rather than at the noise floor of a determinant.
pub fn manipulability(jac: &DMatrix<f64>) -> Result<f64> {
    if jac.nrows() != 6 {
        return Err(Error::invalid(format!("expected 6 rows, got {}", jac.nrows())));
    }
    if jac.ncols() < 6 {
        return Err(Error::invalid(format!(
            "manipulability needs at least 6 columns, got {}",
            jac.ncols()
        )));
    }
    let svd = SVD::new(jac.clone(), false, false);
    Ok(svd.singular_values.iter().product::<f64>().abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeCause {
    JointLimit,
    Singularity,
    WorkspaceBound,
    NoConvergence,
}

impl ChangeCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChangeCause::JointLimit => "joint_limit",
            ChangeCause::Singularity => "singularity",
            ChangeCause::WorkspaceBound => "workspace_bound",
            ChangeCause::NoConvergence => "no_convergence",
        }
    }
}

/// A point in a tracked trajectory where the arm had to reconfigure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigChangeEvent {
    pub step: usize,
    pub cause: ChangeCause,
    /// 1-based joint number, when the cause is tied to one joint.
    pub joint_index: Option<usize>,
    /// Quantity that tripped the monitor (joint angle in rad, manipulability,
    /// or out-of-bounds distance in mm).
    pub value: f64,
}

/// Axis-aligned region the tool centre must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkspaceBounds {
    /// Distance (mm) by which `p` lies outside the box; zero inside.
    pub fn excess(&self, p: &Vector3<f64>) -> f64 {
        (0..3)
            .map(|i| (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.excess(p) == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackOptions {
    pub ik: IkOptions,
    /// Joints closer than this to a limit count as at the limit (rad).
    pub limit_margin: f64,
    /// Manipulability below this raises a singularity event.
    pub singularity_threshold: f64,
    pub workspace: Option<WorkspaceBounds>,
    /// Configuration the arm returns to during a regrasp; defaults to the seed.
    pub neutral: Option<Vec<f64>>,
    /// Consecutive regrasps without progress before the run is aborted.
    pub regrasp_retry_limit: usize,
    /// After a regrasp, continue the remaining object motion from the neutral
    /// grasp instead of re-solving the original absolute poses.
    pub rebase_on_regrasp: bool,
    /// Retreat distance along the tool −z axis during a regrasp (mm).
    pub retreat_mm: f64,
    /// Joint-space samples used when interpolating regrasp moves.
    pub regrasp_samples: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            ik: IkOptions::default(),
            limit_margin: 2f64.to_radians(),
            singularity_threshold: 1e-4,
            workspace: None,
            neutral: None,
            regrasp_retry_limit: 3,
            rebase_on_regrasp: false,
            retreat_mm: 50.0,
            regrasp_samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    /// Joint vectors in execution order, including regrasp motions.
    pub path: Vec<Vec<f64>>,
    /// Tool pose for every entry of `path`.
    pub tool_path: Vec<Transform>,
    pub events: Vec<ConfigChangeEvent>,
    /// Number of input poses that were reached.
    pub reached: usize,
    pub aborted: bool,
}

/// Limits shrunk by `margin` on both sides; collapses to the midpoint when the
/// span is narrower than twice the margin.
fn soft_limits(limits: &[JointLimit], margin: f64) -> Vec<JointLimit> {
    limits
        .iter()
        .map(|l| {
            if l.span() > 2.0 * margin + 1e-9 {
                JointLimit::new(l.min + margin, l.max - margin)
            } else {
                let mid = 0.5 * (l.min + l.max);
                JointLimit::new(mid - 1e-9, mid + 1e-9)
            }
        })
        .collect()
}

enum StepOutcome {
    Ok(Vec<f64>),
    Event(ConfigChangeEvent),
}

struct Tracker<'a> {
    chain: KinematicChain,
    opts: &'a TrackOptions,
    active: Vec<usize>,
}

impl Tracker<'_> {
    fn try_step(&self, step: usize, target: &Transform, seed: &[f64]) -> Result<StepOutcome> {
        if let Some(bounds) = &self.opts.workspace {
            let excess = bounds.excess(&target.translation);
            if excess > 0.0 {
                return Ok(StepOutcome::Event(ConfigChangeEvent {
                    step,
                    cause: ChangeCause::WorkspaceBound,
                    joint_index: None,
                    value: excess,
                }));
            }
        }
        let sol = solve_ik(&self.chain, target, seed, &self.opts.ik)?;
        if !sol.converged {
            let event = match sol.saturated.first() {
                Some(&j) => ConfigChangeEvent {
                    step,
                    cause: ChangeCause::JointLimit,
                    joint_index: Some(j + 1),
                    value: sol.q[j],
                },
                None => {
                    let m = self.active_manipulability(&sol.q);
                    if m < self.opts.singularity_threshold {
                        ConfigChangeEvent {
                            step,
                            cause: ChangeCause::Singularity,
                            joint_index: None,
                            value: m,
                        }
                    } else {
                        ConfigChangeEvent {
                            step,
                            cause: ChangeCause::NoConvergence,
                            joint_index: None,
                            value: sol.position_error,
                        }
                    }
                }
            };
            return Ok(StepOutcome::Event(event));
        }
        let m = self.active_manipulability(&sol.q);
        if m < self.opts.singularity_threshold {
            return Ok(StepOutcome::Event(ConfigChangeEvent {
                step,
                cause: ChangeCause::Singularity,
                joint_index: None,
                value: m,
            }));
        }
        Ok(StepOutcome::Ok(sol.q))
    }

    fn active_manipulability(&self, q: &[f64]) -> f64 {
        let (_, jac) = self.chain.fk_and_jacobian(q);
        if self.active.len() < 6 {
            return f64::INFINITY;
        }
        let cols: Vec<_> = self.active.iter().map(|&j| jac.column(j).into_owned()).collect();
        manipulability(&DMatrix::from_columns(&cols)).unwrap_or(0.0)
    }

    /// Release, retreat, move to the neutral configuration, re-approach.
    fn regrasp(&self, from: &[f64], neutral: &[f64], path: &mut Vec<Vec<f64>>) -> Result<()> {
        let samples = self.opts.regrasp_samples.max(1);
        let tip = self.chain.fk_unchecked(from);
        let retreat = lift(&tip, self.opts.retreat_mm);
        let mut q = from.to_vec();
        if let Ok(sol) = solve_ik(&self.chain, &retreat, from, &self.opts.ik) {
            if sol.converged {
                q = sol.q;
                path.push(q.clone());
            }
        }
        let neutral_tip = self.chain.fk_unchecked(neutral);
        let mut above = neutral.to_vec();
        if let Ok(sol) = solve_ik(&self.chain, &lift(&neutral_tip, self.opts.retreat_mm), neutral, &self.opts.ik) {
            if sol.converged {
                above = sol.q;
            }
        }
        for k in 1..=samples {
            let t = k as f64 / samples as f64;
            path.push(q.iter().zip(&above).map(|(a, b)| a + t * (b - a)).collect());
        }
        path.push(neutral.to_vec());
        Ok(())
    }
}

/// Pose moved `dist` mm back along its own −z axis.
pub fn lift(pose: &Transform, dist: f64) -> Transform {
    let z = pose.rotation.column(2).into_owned();
    pose.with_translation(pose.translation - z * dist)
}

/// Tracks `poses` one after another, seeding every solve with the previous
/// solution. A failed or unsafe step produces a [`ConfigChangeEvent`], after
/// which the arm regrasps from the neutral configuration and carries on.
pub fn track_trajectory(
    chain: &KinematicChain,
    poses: &[Transform],
    seed: &[f64],
    opts: &TrackOptions,
) -> Result<TrackResult> {
    if poses.is_empty() {
        return Err(Error::invalid("trajectory needs at least one pose"));
    }
    if !chain.within_limits(seed) {
        return Err(Error::invalid("trajectory seed lies outside the joint limits"));
    }
    let neutral = opts.neutral.clone().unwrap_or_else(|| seed.to_vec());
    if neutral.len() != chain.dof() {
        return Err(Error::invalid("neutral configuration has the wrong length"));
    }
    let soft = soft_limits(chain.limits(), opts.limit_margin);
    let clamp_into = |q: &[f64]| -> Vec<f64> { q.iter().zip(&soft).map(|(v, l)| l.clamp(*v)).collect() };
    let tracker = Tracker {
        chain: chain.clone().with_limits(soft.clone())?,
        opts,
        active: (0..chain.dof()).filter(|j| !opts.ik.locked_joints.contains(j)).collect(),
    };
    let neutral = clamp_into(&neutral);
    let mut q = clamp_into(seed);

    let mut path = vec![q.clone()];
    let mut events = Vec::new();
    // transform applied to the remaining poses after a rebased regrasp
    let mut rebase = Transform::identity();
    let mut last_reached: Option<usize> = None;
    let mut retries = 0;
    let mut aborted = false;
    let mut k = 0;
    while k < poses.len() {
        let target = poses[k] * rebase;
        match tracker.try_step(k, &target, &q)? {
            StepOutcome::Ok(next) => {
                q = next;
                path.push(q.clone());
                last_reached = Some(k);
                retries = 0;
                k += 1;
            }
            StepOutcome::Event(event) => {
                events.push(event);
                if retries >= opts.regrasp_retry_limit {
                    aborted = true;
                    break;
                }
                retries += 1;
                tracker.regrasp(&q, &neutral, &mut path)?;
                if opts.rebase_on_regrasp {
                    let grasp = tracker.chain.fk_unchecked(&neutral);
                    let held = match last_reached {
                        Some(r) => poses[r] * rebase,
                        None => grasp,
                    };
                    // the object keeps the motion accumulated so far; the new
                    // grasp starts from the neutral pose
                    let undone = held.inverse() * grasp;
                    rebase = rebase * undone;
                }
                q = neutral.clone();
            }
        }
    }
    let tool_path = path.iter().map(|qi| chain.fk_unchecked(qi)).collect();
    Ok(TrackResult {
        path,
        tool_path,
        events,
        reached: last_reached.map_or(0, |r| r + 1),
        aborted,
    })
}

/// Per-joint travel metrics of a joint path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTravel {
    /// Σ|Δq| per joint (rad).
    pub cumulative: Vec<f64>,
    /// max |q − q₀| per joint (rad).
    pub max_excursion: Vec<f64>,
}

pub fn joint_travel(path: &[Vec<f64>]) -> Result<JointTravel> {
    let first = path.first().ok_or_else(|| Error::invalid("joint path is empty"))?;
    let n = first.len();
    if path.iter().any(|q| q.len() != n) {
        return Err(Error::invalid("joint path rows differ in length"));
    }
    let mut cumulative = vec![0.0; n];
    let mut max_excursion = vec![0.0_f64; n];
    for pair in path.windows(2) {
        for j in 0..n {
            cumulative[j] += (pair[1][j] - pair[0][j]).abs();
        }
    }
    for q in path {
        for j in 0..n {
            max_excursion[j] = max_excursion[j].max((q[j] - first[j]).abs());
        }
    }
    Ok(JointTravel {
        cumulative,
        max_excursion,
    })
}

/// Time estimate (s): slowest joint per step plus a fixed cost per grasp or release.
pub fn time_proxy(path: &[Vec<f64>], speeds: &[f64], grasp_release_events: usize, overhead_s: f64) -> Result<f64> {
    if speeds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid("joint speeds must be positive"));
    }
    let mut total = 0.0;
    for pair in path.windows(2) {
        if pair[0].len() != speeds.len() || pair[1].len() != speeds.len() {
            return Err(Error::invalid("joint path and speed list differ in length"));
        }
        let step = pair[0]
            .iter()
            .zip(&pair[1])
            .zip(speeds)
            .map(|((a, b), s)| (b - a).abs() / s)
            .fold(0.0, f64::max);
        total += step;
    }
    Ok(total + grasp_release_events as f64 * overhead_s)
}
