//! Category-level grasp resolution and task waypoint plans.
//!
//! Gripper convention: the gripper frame's z axis is the approach direction
//! and its x axis is the closing direction.
//!
//! A grasp stored in the canonical object frame is carried to the robot base
//! by `g_base = X ∘ λ ∘ denormalize(g, s)`, where `λ` places the object in
//! the camera frame and `X` places the camera in the base frame.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruction::TaskKind;
use crate::se3::{PoseJson, Scale3, Se3Pose};

pub const DEFAULT_PREGRASP_OFFSET: f64 = 0.10;
pub const DEFAULT_LIFT_CLEARANCE: f64 = 0.08;
pub const DEFAULT_REACH: f64 = 0.9;

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("{phase} waypoint is {distance:.3} m from the workspace center, reach is {reach:.3} m")]
    WorkspaceViolation { phase: Phase, distance: f64, reach: f64 },
    #[error("task {0} needs a place target")]
    MissingPlaceTarget(TaskKind),
    #[error("invalid grasp spec: {0}")]
    InvalidSpec(String),
    #[error("no grasp for category {category:?} and task {task}")]
    UnknownGrasp { category: String, task: TaskKind },
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Waypoint phases in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pregrasp,
    Grasp,
    Lift,
    Transport,
    Release,
    Retreat,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Pregrasp => "pregrasp",
            Phase::Grasp => "grasp",
            Phase::Lift => "lift",
            Phase::Transport => "transport",
            Phase::Release => "release",
            Phase::Retreat => "retreat",
        };
        f.write_str(s)
    }
}

/// A grasp defined once per category and task, in the canonical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspSpec {
    pub category: String,
    pub task: TaskKind,
    pub grasp: Se3Pose,
    /// Approach direction in the gripper frame.
    pub approach_axis: Unit<Vector3<f64>>,
    pub pregrasp_offset: f64,
    /// Extents of the reference instance in canonical units. Translations
    /// are expressed relative to these.
    pub canonical_extents: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraspSpecFile {
    category: String,
    task: TaskKind,
    grasp: PoseJson,
    approach_axis: [f64; 3],
    pregrasp_offset_m: f64,
    #[serde(default = "unit_extents")]
    canonical_extents: [f64; 3],
}

fn unit_extents() -> [f64; 3] {
    [1.0; 3]
}

impl GraspSpec {
    pub fn new(category: impl Into<String>, task: TaskKind, grasp: Se3Pose, approach_axis: Vector3<f64>, pregrasp_offset: f64) -> Result<Self, GraspError> {
        let spec = GraspSpec {
            category: category.into(),
            task,
            grasp,
            approach_axis: Unit::new_normalize(approach_axis),
            pregrasp_offset,
            canonical_extents: unit_extents(),
        };
        spec.check(approach_axis)?;
        Ok(spec)
    }

    pub fn with_canonical_extents(mut self, extents: [f64; 3]) -> Result<Self, GraspError> {
        self.canonical_extents = extents;
        self.check(self.approach_axis.into_inner())?;
        Ok(self)
    }

    fn check(&self, axis: Vector3<f64>) -> Result<(), GraspError> {
        if !(self.pregrasp_offset.is_finite() && self.pregrasp_offset > 0.0) {
            return Err(GraspError::InvalidSpec(format!("pregrasp offset must be > 0, got {}", self.pregrasp_offset)));
        }
        let n = axis.norm();
        if !n.is_finite() || n < 1e-9 {
            return Err(GraspError::InvalidSpec("approach axis must be a non-zero vector".into()));
        }
        if !self.grasp.is_finite() {
            return Err(GraspError::InvalidSpec("grasp pose is not finite".into()));
        }
        if self.canonical_extents.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(GraspError::InvalidSpec(format!("canonical extents must be > 0, got {:?}", self.canonical_extents)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GraspError> {
        let malformed = |reason: String| GraspError::Malformed { path: "<grasp spec>".into(), reason };
        let f: GraspSpecFile = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let grasp = Se3Pose::try_from(f.grasp).map_err(|e| malformed(e.to_string()))?;
        GraspSpec::new(f.category, f.task, grasp, Vector3::from(f.approach_axis), f.pregrasp_offset_m)?.with_canonical_extents(f.canonical_extents)
    }

    pub fn to_json(&self) -> String {
        let a = self.approach_axis;
        let f = GraspSpecFile {
            category: self.category.clone(),
            task: self.task,
            grasp: PoseJson::from(&self.grasp),
            approach_axis: [a.x, a.y, a.z],
            pregrasp_offset_m: self.pregrasp_offset,
            canonical_extents: self.canonical_extents,
        };
        serde_json::to_string_pretty(&f).expect("grasp spec serializes")
    }
}

/// Grasp specs keyed by category and task.
#[derive(Debug, Clone, Default)]
pub struct GraspLibrary {
    specs: BTreeMap<(String, TaskKind), GraspSpec>,
}

impl GraspLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: GraspSpec) {
        self.specs.insert((spec.category.clone(), spec.task), spec);
    }

    /// Loads one spec file, or every `*.json` in a directory.
    pub fn load(path: &Path) -> Result<Self, GraspError> {
        let mut lib = Self::new();
        let files: Vec<_> = if path.is_dir() {
            let mut v: Vec<_> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            v.sort();
            v
        } else {
            vec![path.to_path_buf()]
        };
        for f in files {
            let text = std::fs::read_to_string(&f)?;
            let spec = GraspSpec::from_json(&text).map_err(|e| match e {
                GraspError::Malformed { reason, .. } => GraspError::Malformed { path: f.display().to_string(), reason },
                other => other,
            })?;
            lib.insert(spec);
        }
        Ok(lib)
    }

    pub fn get(&self, category: &str, task: TaskKind) -> Result<&GraspSpec, GraspError> {
        self.specs
            .get(&(category.to_string(), task))
            .ok_or_else(|| GraspError::UnknownGrasp { category: category.to_string(), task })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// Object in camera, its extents, and camera in base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameChain {
    pub object_in_camera: Se3Pose,
    pub object_scale: Scale3,
    pub camera_in_base: Se3Pose,
}

impl FrameChain {
    pub fn object_in_base(&self) -> Se3Pose {
        self.camera_in_base.compose(&self.object_in_camera)
    }
}

/// Reach sphere around the arm base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub center: [f64; 3],
    pub reach: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { center: [0.0; 3], reach: DEFAULT_REACH }
    }
}

impl Workspace {
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        (p - Vector3::from(self.center)).norm()
    }

    pub fn check(&self, phase: Phase, pose: &Se3Pose) -> Result<(), GraspError> {
        let distance = self.distance(&pose.translation());
        if distance.is_finite() && distance <= self.reach {
            Ok(())
        } else {
            Err(GraspError::WorkspaceViolation { phase, distance, reach: self.reach })
        }
    }
}

/// Scales the canonical grasp translation to an instance with extents
/// `scale`; the rotation is kept.
pub fn denormalize_grasp(spec: &GraspSpec, scale: &Scale3) -> Se3Pose {
    let c = Vector3::from(spec.canonical_extents);
    let t = spec.grasp.translation().component_mul(&scale.as_vector()).component_div(&c);
    Se3Pose::new(spec.grasp.rotation(), t)
}

/// A grasp expressed in the base frame, together with the object it holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedGrasp {
    pub gripper: Se3Pose,
    pub object: Se3Pose,
    pub object_scale: Scale3,
    pub pregrasp_offset: f64,
    /// Approach direction in the gripper frame.
    pub approach_axis: Unit<Vector3<f64>>,
}

impl ResolvedGrasp {
    pub fn approach_in_base(&self) -> Vector3<f64> {
        self.gripper.transform_vector(&self.approach_axis)
    }
}

pub fn resolve_grasp(spec: &GraspSpec, chain: &FrameChain, workspace: &Workspace) -> Result<ResolvedGrasp, GraspError> {
    let object = chain.object_in_base();
    let gripper = object.compose(&denormalize_grasp(spec, &chain.object_scale));
    workspace.check(Phase::Grasp, &gripper)?;
    Ok(ResolvedGrasp {
        gripper,
        object,
        object_scale: chain.object_scale,
        pregrasp_offset: spec.pregrasp_offset,
        approach_axis: spec.approach_axis,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub lift_clearance: f64,
    /// Gap left between stacked objects.
    pub stack_clearance: f64,
    /// Back-off distance after release, along the approach axis.
    pub retreat_distance: f64,
    /// Base-frame up direction.
    pub up: [f64; 3],
    pub handover_pose: Se3Pose,
    pub workspace: Workspace,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            lift_clearance: DEFAULT_LIFT_CLEARANCE,
            stack_clearance: 0.005,
            retreat_distance: DEFAULT_PREGRASP_OFFSET,
            up: [0.0, 0.0, 1.0],
            handover_pose: Se3Pose::new(
                nalgebra::UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2),
                Vector3::new(0.45, 0.0, 0.35),
            ),
            workspace: Workspace::default(),
        }
    }
}

impl PlannerConfig {
    pub fn up(&self) -> Vector3<f64> {
        Vector3::from(self.up).normalize()
    }

    /// The same configuration seen from a base frame moved by `q`.
    pub fn transformed(&self, q: &Se3Pose) -> Self {
        let up = q.transform_vector(&Vector3::from(self.up));
        let c = q.transform_point(&Vector3::from(self.workspace.center).into());
        Self {
            up: [up.x, up.y, up.z],
            handover_pose: q.compose(&self.handover_pose),
            workspace: Workspace { center: [c.x, c.y, c.z], reach: self.workspace.reach },
            ..*self
        }
    }
}

/// Where the held object should end up, in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaceTarget {
    /// Final object pose.
    Pose(Se3Pose),
    /// Put the held object on top of another object.
    OnTopOf { pose: Se3Pose, scale: Scale3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub phase: Phase,
    pub pose: Se3Pose,
    pub gripper_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub task: TaskKind,
    pub waypoints: Vec<Waypoint>,
}

impl WaypointPlan {
    pub fn final_pose(&self) -> Option<&Se3Pose> {
        self.waypoints.last().map(|w| &w.pose)
    }

    pub fn waypoint(&self, phase: Phase) -> Option<&Waypoint> {
        self.waypoints.iter().find(|w| w.phase == phase)
    }
}

/// Half the height of an oriented box measured along `up`.
fn half_height(pose: &Se3Pose, scale: &Scale3, up: &Vector3<f64>) -> f64 {
    let r = pose.rotation_matrix();
    let e = scale.as_vector();
    0.5 * (0..3).map(|i| r.column(i).dot(up).abs() * e[i]).sum::<f64>()
}

fn shifted(pose: &Se3Pose, by: Vector3<f64>) -> Se3Pose {
    Se3Pose::new(pose.rotation(), pose.translation() + by)
}

pub fn plan_task(task: TaskKind, grasp: &ResolvedGrasp, place: Option<&PlaceTarget>, cfg: &PlannerConfig) -> Result<WaypointPlan, GraspError> {
    let up = cfg.up();
    let approach = grasp.approach_in_base();
    let g = grasp.gripper;
    let mut wps = vec![
        Waypoint { phase: Phase::Pregrasp, pose: shifted(&g, -grasp.pregrasp_offset * approach), gripper_closed: false },
        Waypoint { phase: Phase::Grasp, pose: g, gripper_closed: true },
        Waypoint { phase: Phase::Lift, pose: shifted(&g, cfg.lift_clearance * up), gripper_closed: true },
    ];
    if task == TaskKind::Handover {
        wps.push(Waypoint { phase: Phase::Transport, pose: cfg.handover_pose, gripper_closed: true });
        wps.push(Waypoint { phase: Phase::Release, pose: cfg.handover_pose, gripper_closed: false });
    } else {
        let target = place.ok_or(GraspError::MissingPlaceTarget(task))?;
        let object_goal = match target {
            PlaceTarget::Pose(p) => *p,
            PlaceTarget::OnTopOf { pose, scale } => {
                let rise = half_height(pose, scale, &up) + half_height(&grasp.object, &grasp.object_scale, &up) + cfg.stack_clearance;
                Se3Pose::new(grasp.object.rotation(), pose.translation() + up * rise)
            }
        };
        // keep the grip: the gripper moves rigidly with the object
        let release = object_goal.compose(&grasp.object.inverse()).compose(&g);
        let release_approach = release.transform_vector(&grasp.approach_axis);
        wps.push(Waypoint { phase: Phase::Transport, pose: shifted(&release, cfg.lift_clearance * up), gripper_closed: true });
        wps.push(Waypoint { phase: Phase::Release, pose: release, gripper_closed: false });
        wps.push(Waypoint { phase: Phase::Retreat, pose: shifted(&release, -cfg.retreat_distance * release_approach), gripper_closed: false });
    }
    let plan = WaypointPlan { task, waypoints: wps };
    validate_plan(&plan, cfg)?;
    Ok(plan)
}

/// Checks phase order and that every waypoint is reachable.
pub fn validate_plan(plan: &WaypointPlan, cfg: &PlannerConfig) -> Result<(), GraspError> {
    if plan.waypoints.windows(2).any(|w| w[0].phase > w[1].phase) {
        return Err(GraspError::InvalidSpec("waypoint phases out of order".into()));
    }
    for w in &plan.waypoints {
        cfg.workspace.check(w.phase, &w.pose)?;
    }
    Ok(())
}

/// One primitive step of a composite task.
#[derive(Debug, Clone, Copy)]
pub struct TaskStep<'a> {
    pub task: TaskKind,
    pub grasp: &'a ResolvedGrasp,
    pub place: Option<&'a PlaceTarget>,
}

/// Plans primitive steps in order; the first failure aborts.
pub fn plan_sequence(steps: &[TaskStep<'_>], cfg: &PlannerConfig) -> Result<Vec<WaypointPlan>, GraspError> {
    steps.iter().map(|s| plan_task(s.task, s.grasp, s.place, cfg)).collect()
}
