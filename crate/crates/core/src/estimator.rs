//! Pose estimator interface and a geometric baseline.
//!
//! The baseline fits a template to an observed camera-frame cloud: PCA
//! orientation hypotheses (all four proper sign choices, plus seeded random
//! perturbations) seed a similarity ICP, and the hypothesis with the lowest
//! RMS residual wins.

use nalgebra::{Matrix3, Point3, Rotation3, SymmetricEigen, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{centroid, covariance, PointCloud};
use crate::knn::KdTree;
use crate::se3::{Scale3, Se3Pose};
use crate::template::TemplatePointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("observed cloud has {got} points, need at least {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("correspondences are rank deficient (collinear or coincident points)")]
    DegenerateConfiguration,
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub max_icp_iterations: usize,
    /// ICP stops once the RMS residual improves by less than this (meters).
    pub convergence_tol: f64,
    pub min_points: usize,
    /// Seeded random perturbations added to each of the 4 PCA hypotheses.
    pub hypothesis_count: usize,
    /// Largest perturbation angle in degrees.
    pub perturbation_deg: f64,
    /// Observed points used while ranking hypotheses.
    pub coarse_points: usize,
    /// Observed points used for the final refinement.
    pub fine_points: usize,
    /// Best coarse fits that get the final refinement.
    pub refine_top: usize,
    /// Fits with an RMS residual above this fraction of the estimated object
    /// diameter are flagged as degraded.
    pub fitness_floor: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_icp_iterations: 50,
            convergence_tol: 1e-7,
            min_points: 50,
            hypothesis_count: 6,
            perturbation_deg: 90.0,
            coarse_points: 400,
            fine_points: 3000,
            refine_top: 3,
            fitness_floor: 0.05,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::InvalidConfig(m.into()));
        if self.max_icp_iterations == 0 || self.min_points == 0 || self.coarse_points == 0 || self.fine_points == 0 {
            return bad("iteration and point counts must be positive");
        }
        if !(self.convergence_tol > 0.0 && self.fitness_floor > 0.0 && self.perturbation_deg >= 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// Object pose and size in the camera frame. The pose places the template's
/// canonical frame (bounding-box center, model axes) in the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Se3Pose,
    /// Bounding-box extents in meters.
    pub scale: Scale3,
    /// RMS distance between observed points and the fitted template (meters).
    pub fitness: f64,
    /// True when no hypothesis reached the fitness floor.
    pub degraded: bool,
    pub hypothesis: usize,
}

pub trait PoseEstimator: Send + Sync {
    fn name(&self) -> &str;
    fn estimate(&self, observed: &PointCloud, template: &TemplatePointCloud) -> Result<PoseEstimate, EstimatorError>;
}

pub fn estimator_by_name(name: &str, config: EstimatorConfig) -> Result<Box<dyn PoseEstimator>, EstimatorError> {
    match name {
        "baseline" => Ok(Box::new(BaselineEstimator::new(config)?)),
        other => Err(EstimatorError::UnknownEstimator(other.into())),
    }
}

/// Similarity transform `p = s · R · q + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros(), scale: 1.0 }
    }

    pub fn apply(&self, q: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * q.coords * self.scale + self.translation)
    }

    pub fn apply_inverse(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.inverse() * (p.coords - self.translation) / self.scale)
    }

    pub fn pose(&self) -> Se3Pose {
        Se3Pose::new(self.rotation, self.translation)
    }
}

/// Least-squares similarity (or rigid, when `with_scale` is false) mapping
/// `src[i]` onto `dst[i]`.
pub fn umeyama(src: &[Point3<f64>], dst: &[Point3<f64>], with_scale: bool) -> Result<Similarity, EstimatorError> {
    assert_eq!(src.len(), dst.len());
    if src.len() < 3 {
        return Err(EstimatorError::DegenerateConfiguration);
    }
    let (mu_s, mu_d) = (centroid(src).unwrap(), centroid(dst).unwrap());
    let mut sigma = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s - mu_s, d - mu_d);
        sigma += b * a.transpose();
        var_s += a.norm_squared();
    }
    let n = src.len() as f64;
    sigma /= n;
    var_s /= n;
    let svd = sigma.svd(true, true);
    let (u, v_t, d) = (svd.u.unwrap(), svd.v_t.unwrap(), svd.singular_values);
    let mut sorted = [d[0], d[1], d[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[0] > 0.0) || sorted[1] <= 1e-12 * sorted[0] || var_s <= 0.0 {
        return Err(EstimatorError::DegenerateConfiguration);
    }
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        signs[d.imin()] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = if with_scale { d.dot(&signs) / var_s } else { 1.0 };
    let rotation = UnitQuaternion::from_matrix(&r);
    Ok(Similarity { rotation, translation: mu_d.coords - rotation * mu_s.coords * scale, scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: Similarity,
    /// RMS residual after the last accepted step.
    pub fitness: f64,
    /// RMS residual before each step; non-increasing.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Pairs each observed point with its nearest template point under `t` and
/// returns the pairs plus the RMS residual in observed units.
fn correspond(observed: &[Point3<f64>], tree: &KdTree, t: &Similarity) -> (Vec<Point3<f64>>, f64) {
    let mut matched = Vec::with_capacity(observed.len());
    let mut sum = 0.0;
    for p in observed {
        let (i, d2) = tree.nearest(&t.apply_inverse(p)).unwrap();
        matched.push(tree.points()[i]);
        sum += d2;
    }
    let rms = (sum / observed.len() as f64).sqrt() * t.scale;
    (matched, rms)
}

/// Fits `p ≈ s·R·q + t` from each observed `p` to its nearest template `q`.
/// Both half-steps reduce the same objective, so the residual never grows.
pub fn similarity_icp(
    observed: &[Point3<f64>],
    template: &KdTree,
    init: Similarity,
    config: &EstimatorConfig,
    with_scale: bool,
) -> Result<IcpResult, EstimatorError> {
    let mut current = init;
    let (mut matched, mut fitness) = correspond(observed, template, &current);
    let mut history = vec![fitness];
    let mut converged = false;
    for _ in 0..config.max_icp_iterations {
        let next = umeyama(&matched, observed, with_scale)?;
        let (next_matched, next_fitness) = correspond(observed, template, &next);
        if !(next_fitness <= fitness) {
            // rounding can make an optimal step look marginally worse
            converged = true;
            break;
        }
        let gain = fitness - next_fitness;
        current = next;
        matched = next_matched;
        fitness = next_fitness;
        history.push(fitness);
        if gain < config.convergence_tol || fitness < config.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(IcpResult { transform: current, fitness, history, converged })
}

/// Rigid point-to-point ICP aligning `source` onto `target`, starting at
/// `init`. Returns the pose mapping source into target and the RMS residual.
pub fn icp_refine(source: &PointCloud, target: &PointCloud, init: &Se3Pose, config: &EstimatorConfig) -> Result<(Se3Pose, f64), EstimatorError> {
    let r = icp_refine_detailed(source, target, init, config)?;
    Ok((r.transform.pose(), r.fitness))
}

pub fn icp_refine_detailed(source: &PointCloud, target: &PointCloud, init: &Se3Pose, config: &EstimatorConfig) -> Result<IcpResult, EstimatorError> {
    for c in [source, target] {
        if c.len() < 3 {
            return Err(EstimatorError::TooFewPoints { got: c.len(), need: 3 });
        }
    }
    let tree = KdTree::new(&target.points);
    let residual = |t: &Similarity| -> (Vec<Point3<f64>>, f64) {
        let mut matched = Vec::with_capacity(source.len());
        let mut sum = 0.0;
        for s in &source.points {
            let (i, d2) = tree.nearest(&t.apply(s)).unwrap();
            matched.push(target.points[i]);
            sum += d2;
        }
        (matched, (sum / source.len() as f64).sqrt())
    };
    let mut current = Similarity { rotation: init.rotation(), translation: init.translation(), scale: 1.0 };
    let (mut matched, mut fitness) = residual(&current);
    let mut history = vec![fitness];
    let mut converged = false;
    for _ in 0..config.max_icp_iterations {
        let next = umeyama(&source.points, &matched, false)?;
        let (next_matched, next_fitness) = residual(&next);
        if !(next_fitness <= fitness) {
            converged = true;
            break;
        }
        let gain = fitness - next_fitness;
        current = next;
        matched = next_matched;
        fitness = next_fitness;
        history.push(fitness);
        if gain < config.convergence_tol || fitness < config.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(IcpResult { transform: current, fitness, history, converged })
}

/// Principal axes as rotation-matrix columns, largest variance first. Each
/// axis is signed so the third moment along it is non-negative, which makes
/// the frame follow the cloud under rotation.
pub fn principal_axes(points: &[Point3<f64>]) -> Matrix3<f64> {
    let c = centroid(points).unwrap_or_else(Point3::origin);
    let eig = SymmetricEigen::new(covariance(points, &c));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = Matrix3::zeros();
    for (col, &k) in order.iter().enumerate() {
        let mut a = eig.eigenvectors.column(k).into_owned();
        let m3: f64 = points.iter().map(|p| (p - c).dot(&a).powi(3)).sum();
        let flip = if m3.abs() > 1e-15 { m3 < 0.0 } else { a[a.iamax()] < 0.0 };
        if flip {
            a = -a;
        }
        axes.set_column(col, &a);
    }
    if axes.determinant() < 0.0 {
        let last = -axes.column(2);
        axes.set_column(2, &last);
    }
    axes
}

fn extent_along(points: &[Point3<f64>], axes: &Matrix3<f64>) -> Vector3<f64> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        let q = axes.transpose() * p.coords;
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    hi - lo
}

/// Centroid of the template half nearest the camera under rotation `rot`,
/// which approximates what a partial view of the surface sees.
fn front_centroid(points: &[Point3<f64>], rot: &UnitQuaternion<f64>, view_dir: &Vector3<f64>) -> Option<Point3<f64>> {
    let local_dir = rot.inverse() * view_dir;
    let mut depth: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.coords.dot(&local_dir), i)).collect();
    depth.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let front: Vec<Point3<f64>> = depth[..depth.len().div_ceil(2)].iter().map(|&(_, i)| points[i]).collect();
    centroid(&front)
}

/// Every `len / max`-th point, keeping at most `max` points.
pub fn stride_subsample(points: &[Point3<f64>], max: usize) -> Vec<Point3<f64>> {
    if points.len() <= max {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(max);
    points.iter().step_by(stride).copied().collect()
}

/// The 4 proper sign patterns for aligning two principal frames.
const SIGNS: [[f64; 3]; 4] = [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];

#[derive(Debug, Clone)]
pub struct BaselineEstimator {
    config: EstimatorConfig,
}

impl BaselineEstimator {
    pub fn new(config: EstimatorConfig) -> Result<Self, EstimatorError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Initial rotations, in hypothesis-index order.
    fn hypotheses(&self, obs_axes: &Matrix3<f64>, tpl_axes: &Matrix3<f64>) -> Vec<UnitQuaternion<f64>> {
        let mut out = Vec::with_capacity(4 * (1 + self.config.hypothesis_count));
        let max_angle = self.config.perturbation_deg.to_radians();
        for (b, signs) in SIGNS.iter().enumerate() {
            let r = obs_axes * Matrix3::from_diagonal(&Vector3::from(*signs)) * tpl_axes.transpose();
            let base = UnitQuaternion::from_matrix(&r);
            out.push(base);
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(b as u64);
            for _ in 0..self.config.hypothesis_count {
                let axis = loop {
                    let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    let n = v.norm();
                    if n > 1e-3 && n <= 1.0 {
                        break Unit::new_normalize(v);
                    }
                };
                let angle = rng.random_range(0.0..=max_angle);
                // perturb in the template frame so the result follows any
                // rigid motion of the observed cloud
                out.push(base * UnitQuaternion::from_axis_angle(&axis, angle));
            }
        }
        out
    }
}

impl PoseEstimator for BaselineEstimator {
    fn name(&self) -> &str {
        "baseline"
    }

    fn estimate(&self, observed: &PointCloud, template: &TemplatePointCloud) -> Result<PoseEstimate, EstimatorError> {
        let cfg = &self.config;
        let need = cfg.min_points.max(3);
        if observed.len() < need {
            return Err(EstimatorError::TooFewPoints { got: observed.len(), need });
        }
        if template.points.len() < 3 {
            return Err(EstimatorError::TooFewPoints { got: template.points.len(), need: 3 });
        }
        let tree = KdTree::new(&template.points);
        let coarse = stride_subsample(&observed.points, cfg.coarse_points);
        let fine = stride_subsample(&observed.points, cfg.fine_points);

        let obs_c = centroid(&observed.points).unwrap();
        let tpl_c = centroid(&template.points).unwrap();
        let obs_axes = principal_axes(&observed.points);
        let tpl_axes = principal_axes(&template.points);
        let obs_ext = extent_along(&observed.points, &obs_axes);
        let tpl_ext = extent_along(&template.points, &tpl_axes);
        let scale0 = if tpl_ext.max() > 0.0 { obs_ext.max() / tpl_ext.max() } else { 1.0 };
        if !(scale0 > 0.0 && scale0.is_finite()) {
            return Err(EstimatorError::DegenerateConfiguration);
        }

        // the camera sits at the origin, so the observed surface faces -view_dir
        let view_dir = obs_c.coords.try_normalize(1e-12).unwrap_or_else(Vector3::z);
        let rotations = self.hypotheses(&obs_axes, &tpl_axes);
        // each rotation is tried with the template centroid and with its
        // camera-facing half's centroid placed on the observed centroid
        let inits: Vec<Similarity> = rotations
            .iter()
            .flat_map(|rot| {
                let front = front_centroid(&template.points, rot, &view_dir).unwrap_or(tpl_c);
                [tpl_c, front].map(|anchor| Similarity { rotation: *rot, translation: obs_c.coords - rot * anchor.coords * scale0, scale: scale0 })
            })
            .collect();
        let coarse_fits: Vec<Option<IcpResult>> = inits.par_iter().map(|init| similarity_icp(&coarse, &tree, *init, cfg, true).ok()).collect();
        let mut ranked: Vec<(usize, f64)> = coarse_fits.iter().enumerate().filter_map(|(i, r)| r.as_ref().map(|r| (i, r.fitness))).collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        ranked.truncate(cfg.refine_top.max(1));

        let fine_cfg = EstimatorConfig { max_icp_iterations: cfg.max_icp_iterations * 4, ..*cfg };
        let refined: Vec<(usize, IcpResult)> = ranked
            .par_iter()
            .filter_map(|&(i, _)| {
                let start = coarse_fits[i].as_ref().unwrap().transform;
                similarity_icp(&fine, &tree, start, &fine_cfg, true).ok().map(|r| (i, r))
            })
            .collect();
        let (best_idx, refined) = refined
            .into_iter()
            .min_by(|(ia, a), (ib, b)| a.fitness.total_cmp(&b.fitness).then(ia.cmp(ib)))
            .ok_or(EstimatorError::DegenerateConfiguration)?;
        let t = refined.transform;
        let extents = template.canonical_extents.as_vector() * t.scale;
        let scale = Scale3::new(extents.x, extents.y, extents.z).map_err(|_| EstimatorError::DegenerateConfiguration)?;
        let diameter = scale.diagonal();
        Ok(PoseEstimate {
            pose: t.pose(),
            scale,
            fitness: refined.fitness,
            degraded: refined.fitness > cfg.fitness_floor * diameter,
            hypothesis: best_idx,
        })
    }
}

/// Rotation by `deg` degrees about `axis`.
pub fn axis_angle_deg(axis: Vector3<f64>, deg: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_axis_angle(&Unit::new_normalize(axis), deg.to_radians()))
}
