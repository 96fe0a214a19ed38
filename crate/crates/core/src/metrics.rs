//! Pose error metrics, oriented-box IoU and thresholded accuracy.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Aabb;
use crate::se3::{Scale3, Se3Pose};

/// Smallest sample count accepted by [`iou3d`].
pub const MIN_IOU_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no pose errors to aggregate")]
    EmptyInput,
    #[error("threshold {name} = {value} must be > 0")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("iou needs at least {MIN_IOU_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("record {0} has no object diameter for a relative threshold")]
    MissingDiameter(usize),
}

/// Geodesic angle between two rotations in degrees, in [0, 180].
pub fn rotation_error_deg(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
    let c = (((r1.transpose() * r2).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

pub fn quat_error_deg(q1: &UnitQuaternion<f64>, q2: &UnitQuaternion<f64>) -> f64 {
    rotation_error_deg(q1.to_rotation_matrix().matrix(), q2.to_rotation_matrix().matrix())
}

pub fn translation_error(t1: &Vector3<f64>, t2: &Vector3<f64>) -> f64 {
    (t1 - t2).norm()
}

/// Rotations that leave an object's appearance unchanged. Always contains
/// the identity first.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryGroup {
    rotations: Vec<Matrix3<f64>>,
}

impl SymmetryGroup {
    pub fn identity() -> Self {
        Self { rotations: vec![Matrix3::identity()] }
    }

    /// The 24 proper rotations of a cube.
    pub fn cube() -> Self {
        let mut rotations = Vec::with_capacity(24);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for p in perms {
            for signs in 0..8u32 {
                let mut m = Matrix3::zeros();
                for (row, &col) in p.iter().enumerate() {
                    m[(row, col)] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
                }
                if m.determinant() > 0.0 {
                    rotations.push(m);
                }
            }
        }
        rotations.sort_by_key(|m| *m != Matrix3::identity());
        Self { rotations }
    }

    /// `n` equally spaced rotations about the z axis.
    pub fn z_discrete(n: usize) -> Self {
        let n = n.max(1);
        let rotations = (0..n)
            .map(|i| *Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::TAU * i as f64 / n as f64).matrix())
            .collect();
        Self { rotations }
    }

    /// Continuous symmetry about z, discretized at 1 degree.
    pub fn z_continuous() -> Self {
        Self::z_discrete(360)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "none" | "identity" => Some(Self::identity()),
            "cube" => Some(Self::cube()),
            "z" | "axial" => Some(Self::z_continuous()),
            _ => None,
        }
    }

    pub fn rotations(&self) -> &[Matrix3<f64>] {
        &self.rotations
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

/// Smallest rotation error between `r_est` and any symmetric copy
/// `r_gt · s` of the ground truth.
pub fn symmetry_aware_rotation_error(r_est: &Matrix3<f64>, r_gt: &Matrix3<f64>, group: &SymmetryGroup) -> f64 {
    group.rotations.iter().map(|s| rotation_error_deg(r_est, &(r_gt * s))).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox3 {
    pub center: Point3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub extents: Scale3,
}

impl OrientedBox3 {
    pub fn new(center: Point3<f64>, rotation: UnitQuaternion<f64>, extents: Scale3) -> Self {
        Self { center, rotation, extents }
    }

    /// Box whose local frame is `pose`.
    pub fn from_pose(pose: &Se3Pose, extents: Scale3) -> Self {
        Self { center: Point3::from(pose.translation()), rotation: pose.rotation(), extents }
    }

    pub fn axis_aligned(center: Point3<f64>, extents: Scale3) -> Self {
        Self { center, rotation: UnitQuaternion::identity(), extents }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let local = self.rotation.inverse_transform_vector(&(p - self.center));
        let half = self.extents.as_vector() / 2.0;
        local.x.abs() <= half.x && local.y.abs() <= half.y && local.z.abs() <= half.z
    }

    pub fn volume(&self) -> f64 {
        self.extents.x() * self.extents.y() * self.extents.z()
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let h = self.extents.as_vector() / 2.0;
        std::array::from_fn(|i| {
            let local = Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            self.center + self.rotation * local
        })
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.corners().iter()).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouEstimate {
    pub iou: f64,
    pub std_error: f64,
}

/// Monte-Carlo IoU of two oriented boxes, sampling uniformly over the
/// axis-aligned bounds of both.
pub fn iou3d(a: &OrientedBox3, b: &OrientedBox3, n_samples: usize, seed: u64) -> Result<IouEstimate, MetricsError> {
    if n_samples < MIN_IOU_SAMPLES {
        return Err(MetricsError::TooFewSamples(n_samples));
    }
    let (ba, bb) = (a.aabb(), b.aabb());
    let disjoint = (0..3).any(|i| ba.max[i] < bb.min[i] || bb.max[i] < ba.min[i]);
    if disjoint {
        return Ok(IouEstimate { iou: 0.0, std_error: 0.0 });
    }
    let bounds = ba.union(&bb);
    let ext = bounds.extents();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..n_samples {
        let p = Point3::new(
            bounds.min.x + rng.random::<f64>() * ext.x,
            bounds.min.y + rng.random::<f64>() * ext.y,
            bounds.min.z + rng.random::<f64>() * ext.z,
        );
        let (ia, ib) = (a.contains(&p), b.contains(&p));
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    if union == 0 {
        return Ok(IouEstimate { iou: 0.0, std_error: 0.0 });
    }
    let iou = inter as f64 / union as f64;
    Ok(IouEstimate { iou, std_error: (iou * (1.0 - iou) / union as f64).sqrt() })
}

/// Error of one estimate against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_error_deg: f64,
    pub translation_error_m: f64,
    pub iou3d: f64,
    /// Ground-truth bounding-box diagonal, for thresholds relative to size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_m: Option<f64>,
}

impl PoseError {
    pub fn zero() -> Self {
        Self { rotation_error_deg: 0.0, translation_error_m: 0.0, iou3d: 1.0, diameter_m: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for IouConfig {
    fn default() -> Self {
        Self { samples: 20_000, seed: 0 }
    }
}

/// Compares an estimated pose and size with ground truth. Both poses place
/// the object's bounding-box frame in the camera frame.
pub fn evaluate_pose(
    est: (&Se3Pose, &Scale3),
    gt: (&Se3Pose, &Scale3),
    symmetry: &SymmetryGroup,
    iou: IouConfig,
) -> Result<PoseError, MetricsError> {
    let rot = symmetry_aware_rotation_error(&est.0.rotation_matrix(), &gt.0.rotation_matrix(), symmetry);
    let trans = translation_error(&est.0.translation(), &gt.0.translation());
    let box_est = OrientedBox3::from_pose(est.0, *est.1);
    // symmetric objects: compare against the closest symmetric copy of the
    // ground-truth box so IoU agrees with the rotation channel
    let best_sym = symmetry
        .rotations()
        .iter()
        .min_by(|a, b| {
            let ea = rotation_error_deg(&est.0.rotation_matrix(), &(gt.0.rotation_matrix() * *a));
            let eb = rotation_error_deg(&est.0.rotation_matrix(), &(gt.0.rotation_matrix() * *b));
            ea.total_cmp(&eb)
        })
        .copied()
        .unwrap_or_else(Matrix3::identity);
    let gt_rot = UnitQuaternion::from_matrix(&(gt.0.rotation_matrix() * best_sym));
    let box_gt = OrientedBox3::new(Point3::from(gt.0.translation()), gt_rot, *gt.1);
    let iou = iou3d(&box_est, &box_gt, iou.samples, iou.seed)?.iou;
    Ok(PoseError { rotation_error_deg: rot, translation_error_m: trans, iou3d: iou, diameter_m: Some(gt.1.diagonal()) })
}

/// Translation threshold, absolute or as a fraction of object diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TranslationThreshold {
    Meters(f64),
    DiameterFraction(f64),
}

impl TranslationThreshold {
    fn value(&self) -> f64 {
        match self {
            Self::Meters(v) | Self::DiameterFraction(v) => *v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rotation_deg: f64,
    pub translation: TranslationThreshold,
    pub iou: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { rotation_deg: 5.0, translation: TranslationThreshold::Meters(0.05), iou: 0.25 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), MetricsError> {
        for (name, value) in [("rotation", self.rotation_deg), ("translation", self.translation.value()), ("iou", self.iou)] {
            if !(value > 0.0) {
                return Err(MetricsError::InvalidThreshold { name, value });
            }
        }
        Ok(())
    }

    fn passes(&self, i: usize, e: &PoseError) -> Result<bool, MetricsError> {
        let trans_limit = match self.translation {
            TranslationThreshold::Meters(m) => m,
            TranslationThreshold::DiameterFraction(f) => f * e.diameter_m.ok_or(MetricsError::MissingDiameter(i))?,
        };
        Ok(e.rotation_error_deg <= self.rotation_deg && e.translation_error_m <= trans_limit && e.iou3d >= self.iou)
    }
}

/// Fraction of records passing all three thresholds.
pub fn accuracy_at(errors: &[PoseError], rot_thresh_deg: f64, trans_thresh_m: f64, iou_thresh: f64) -> Result<f64, MetricsError> {
    accuracy_with(
        errors,
        &Thresholds { rotation_deg: rot_thresh_deg, translation: TranslationThreshold::Meters(trans_thresh_m), iou: iou_thresh },
    )
}

pub fn accuracy_with(errors: &[PoseError], t: &Thresholds) -> Result<f64, MetricsError> {
    t.validate()?;
    if errors.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut pass = 0usize;
    for (i, e) in errors.iter().enumerate() {
        pass += t.passes(i, e)? as usize;
    }
    Ok(pass as f64 / errors.len() as f64)
}

/// One evaluated view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub category: String,
    pub instance_id: String,
    pub view_index: u32,
    pub visibility: f64,
    pub fitness: f64,
    pub degraded: bool,
    #[serde(flatten)]
    pub error: PoseError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl ErrorSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Self { mean: v.iter().sum::<f64>() / n as f64, median, max: v[n - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Thresholds,
    pub min_visibility: f64,
    pub evaluated: usize,
    pub accuracy: f64,
    pub per_category: BTreeMap<String, f64>,
    pub rotation_error_deg: ErrorSummary,
    pub translation_error_m: ErrorSummary,
    pub iou3d: ErrorSummary,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    /// Aggregates records whose visibility is at least `min_visibility`.
    /// All records are kept in the report.
    pub fn build(records: Vec<EvalRecord>, thresholds: Thresholds, min_visibility: f64) -> Result<Self, MetricsError> {
        let kept: Vec<&EvalRecord> = records.iter().filter(|r| r.visibility >= min_visibility).collect();
        let errors: Vec<PoseError> = kept.iter().map(|r| r.error).collect();
        let accuracy = accuracy_with(&errors, &thresholds)?;
        let mut by_cat: BTreeMap<String, Vec<PoseError>> = BTreeMap::new();
        for r in &kept {
            by_cat.entry(r.category.clone()).or_default().push(r.error);
        }
        let mut per_category = BTreeMap::new();
        for (cat, errs) in by_cat {
            per_category.insert(cat, accuracy_with(&errs, &thresholds)?);
        }
        let col = |f: fn(&PoseError) -> f64| ErrorSummary::of(&errors.iter().map(f).collect::<Vec<_>>()).unwrap();
        Ok(Self {
            thresholds,
            min_visibility,
            evaluated: errors.len(),
            accuracy,
            per_category,
            rotation_error_deg: col(|e| e.rotation_error_deg),
            translation_error_m: col(|e| e.translation_error_m),
            iou3d: col(|e| e.iou3d),
            records,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            category: &'a str,
            instance_id: &'a str,
            view_index: u32,
            visibility: f64,
            rotation_error_deg: f64,
            translation_error_m: f64,
            iou3d: f64,
            fitness: f64,
            degraded: bool,
        }
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(Row {
                category: &r.category,
                instance_id: &r.instance_id,
                view_index: r.view_index,
                visibility: r.visibility,
                rotation_error_deg: r.error.rotation_error_deg,
                translation_error_m: r.error.translation_error_m,
                iou3d: r.error.iou3d,
                fitness: r.fitness,
                degraded: r.degraded,
            })?;
        }
        out.flush()?;
        Ok(())
    }
}
