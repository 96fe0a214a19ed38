//! Camera viewpoint sampling on a sphere around the object.
//!
//! Camera frames are right-handed with +Z along the optical axis, +X to the
//! image right and +Y down the image. Poses returned here are
//! camera-to-world; the object sits at the world origin.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::Se3Pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViewError {
    #[error("lattice size must be at least 1")]
    InvalidCount,
    #[error("camera position coincides with the target")]
    CoincidentTarget,
    #[error("invalid view sampling config: {0}")]
    InvalidConfig(String),
}

/// Views whose direction is this close to the up hint use a fallback axis.
pub const DEGENERATE_UP_TOL: f64 = 1e-6;

/// World up hint used when sampling viewpoints.
pub const WORLD_UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Fibonacci lattice of `n` unit directions.
///
/// `z_i = 1 - 2(i + 0.5)/n`, azimuth `i·π(3 - √5)`.
pub fn fibonacci_sphere(n: usize) -> Result<Vec<Vector3<f64>>, ViewError> {
    if n == 0 {
        return Err(ViewError::InvalidCount);
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    Ok((0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let theta = i as f64 * golden;
            Vector3::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect())
}

/// Outcome of a look-at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookAt {
    pub pose: Se3Pose,
    /// The up hint was (nearly) parallel to the view direction and a
    /// fallback axis was substituted.
    pub degenerate_up: bool,
}

/// Camera-to-world pose at `position` whose optical axis points at `target`.
///
/// When the view direction is parallel to `up_hint` the up vector falls back
/// to +Z, then +X.
pub fn look_at_pose(position: Point3<f64>, target: Point3<f64>, up_hint: Vector3<f64>) -> Result<LookAt, ViewError> {
    let forward = target - position;
    let dist = forward.norm();
    if !(dist > 0.0) || !dist.is_finite() {
        return Err(ViewError::CoincidentTarget);
    }
    let forward = forward / dist;
    let mut degenerate_up = false;
    let mut up = up_hint.try_normalize(0.0).unwrap_or(WORLD_UP);
    for fallback in [Vector3::z(), Vector3::x()] {
        if forward.dot(&up).abs() > 1.0 - DEGENERATE_UP_TOL {
            degenerate_up = true;
            up = fallback;
        }
    }
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let m = Matrix3::from_columns(&[right, down, forward]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    Ok(LookAt { pose: Se3Pose::new(rot, position.coords), degenerate_up })
}

/// Rotates the camera about its own optical axis by `angle` radians.
pub fn apply_inplane_roll(pose: &Se3Pose, angle: f64) -> Se3Pose {
    let roll = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle);
    Se3Pose::new(pose.rotation() * roll, pose.translation())
}

/// Object pose in the camera frame for an object at the world origin.
pub fn instance_pose_from_camera(camera_pose: &Se3Pose) -> Se3Pose {
    camera_pose.inverse()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSamplingConfig {
    pub n_views: usize,
    pub radius_m: f64,
    #[serde(default)]
    pub roll_min_rad: f64,
    #[serde(default)]
    pub roll_max_rad: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hemisphere_only: bool,
}

impl Default for ViewSamplingConfig {
    fn default() -> Self {
        Self { n_views: 30, radius_m: 0.5, roll_min_rad: -PI, roll_max_rad: PI, seed: 0, hemisphere_only: false }
    }
}

impl ViewSamplingConfig {
    pub fn validate(&self) -> Result<(), ViewError> {
        let bad = |m: String| Err(ViewError::InvalidConfig(m));
        if self.n_views == 0 {
            return bad("n_views must be >= 1".into());
        }
        if !(self.radius_m.is_finite() && self.radius_m > 0.0) {
            return bad(format!("radius_m {} must be > 0", self.radius_m));
        }
        let in_range = |v: f64| v.is_finite() && (-PI..=PI).contains(&v);
        if !in_range(self.roll_min_rad) || !in_range(self.roll_max_rad) || self.roll_min_rad > self.roll_max_rad {
            return bad(format!("roll range [{}, {}] must be ordered within [-pi, pi]", self.roll_min_rad, self.roll_max_rad));
        }
        Ok(())
    }
}

/// One sampled camera and the matching object pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    /// Index into the full-sphere lattice; stable under hemisphere filtering.
    pub lattice_index: usize,
    pub camera_pose: Se3Pose,
    pub instance_pose: Se3Pose,
}

/// Roll angle for lattice index `index`, drawn from a stream keyed on
/// `(seed, index)` so the value does not depend on generation order.
pub fn roll_for_view(config: &ViewSamplingConfig, index: usize) -> f64 {
    if config.roll_min_rad == config.roll_max_rad {
        return config.roll_min_rad;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    rng.random_range(config.roll_min_rad..=config.roll_max_rad)
}

/// Sphere-sampled cameras looking at the origin, each with a random roll.
pub fn sample_viewpoints(config: &ViewSamplingConfig) -> Result<Vec<Viewpoint>, ViewError> {
    config.validate()?;
    let lattice = fibonacci_sphere(config.n_views)?;
    let mut out = Vec::with_capacity(lattice.len());
    for (i, dir) in lattice.iter().enumerate() {
        if config.hemisphere_only && dir.z < 0.0 {
            continue;
        }
        let position = Point3::from(dir * config.radius_m);
        let look = look_at_pose(position, Point3::origin(), WORLD_UP)?;
        let camera_pose = apply_inplane_roll(&look.pose, roll_for_view(config, i));
        out.push(Viewpoint { lattice_index: i, camera_pose, instance_pose: instance_pose_from_camera(&camera_pose) });
    }
    Ok(out)
}

/// Unit optical axis of a camera-to-world pose, in world coordinates.
pub fn optical_axis(camera_pose: &Se3Pose) -> Vector3<f64> {
    camera_pose.transform_vector(&Vector3::z())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn orthonormal(p: &Se3Pose) -> bool {
        let r = p.rotation_matrix();
        (r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12 && (r.determinant() - 1.0).abs() < 1e-12
    }

    #[test]
    fn lattice_small_cases() {
        assert_eq!(fibonacci_sphere(0), Err(ViewError::InvalidCount));
        let one = fibonacci_sphere(1).unwrap();
        assert!((one[0] - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let two = fibonacci_sphere(2).unwrap();
        assert_eq!(two[0].z, 0.5);
        assert_eq!(two[1].z, -0.5);
        for p in fibonacci_sphere(777).unwrap() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn look_at_examples() {
        let a = look_at_pose(Point3::new(0.0, 0.0, 2.0), Point3::origin(), Vector3::y()).unwrap();
        assert!((optical_axis(&a.pose) - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert_eq!(a.pose.translation(), Vector3::new(0.0, 0.0, 2.0));
        assert!(!a.degenerate_up && orthonormal(&a.pose));

        let b = look_at_pose(Point3::new(2.0, 0.0, 0.0), Point3::origin(), Vector3::z()).unwrap();
        assert!((optical_axis(&b.pose) - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);

        let c = look_at_pose(Point3::new(0.0, 1.0, 0.0), Point3::origin(), Vector3::y()).unwrap();
        assert!(c.degenerate_up && orthonormal(&c.pose));
        assert!((optical_axis(&c.pose) - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        // image "down" is opposite the fallback up axis
        let down = c.pose.transform_vector(&Vector3::y());
        assert!((down - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);

        let d = look_at_pose(Point3::new(0.0, 0.0, 1.0), Point3::origin(), Vector3::z()).unwrap();
        assert!(d.degenerate_up && orthonormal(&d.pose));

        assert_eq!(look_at_pose(Point3::origin(), Point3::origin(), Vector3::z()), Err(ViewError::CoincidentTarget));
    }

    #[test]
    fn roll_examples() {
        let p = look_at_pose(Point3::new(0.3, -0.2, 0.9), Point3::origin(), Vector3::z()).unwrap().pose;
        assert_eq!(apply_inplane_roll(&p, 0.0).max_abs_diff(&p), 0.0);
        assert!(apply_inplane_roll(&p, TAU).max_abs_diff(&p) < 1e-9);
        let twice = apply_inplane_roll(&apply_inplane_roll(&p, FRAC_PI_2), FRAC_PI_2);
        assert!(twice.max_abs_diff(&apply_inplane_roll(&p, PI)) < 1e-9);
        assert!((optical_axis(&twice) - optical_axis(&p)).norm() < 1e-12);
        assert_eq!(twice.translation(), p.translation());
    }

    #[test]
    fn instance_pose_examples() {
        assert_eq!(instance_pose_from_camera(&Se3Pose::identity()).identity_deviation(), 0.0);
        let t = Se3Pose::from_translation(Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(instance_pose_from_camera(&t).translation(), Vector3::new(0.0, 0.0, -2.0));
    }

    #[test]
    fn sampling_examples() {
        let cfg = ViewSamplingConfig { n_views: 4, radius_m: 1.0, roll_min_rad: 0.0, roll_max_rad: 0.0, seed: 7, hemisphere_only: false };
        let views = sample_viewpoints(&cfg).unwrap();
        let lattice = fibonacci_sphere(4).unwrap();
        assert_eq!(views.len(), 4);
        for (v, d) in views.iter().zip(&lattice) {
            assert_eq!(v.camera_pose.translation(), d * 1.0);
            assert!(v.camera_pose.compose(&v.instance_pose).identity_deviation() < 1e-12);
        }
        let hemi = sample_viewpoints(&ViewSamplingConfig { hemisphere_only: true, ..cfg.clone() }).unwrap();
        assert_eq!(hemi.len(), 2);
        assert!(hemi.iter().all(|v| v.camera_pose.translation().z >= 0.0));
        assert_eq!(sample_viewpoints(&cfg).unwrap(), views);
    }

    #[test]
    fn roll_stream_is_order_independent() {
        let cfg = ViewSamplingConfig { n_views: 50, seed: 11, ..Default::default() };
        let full = sample_viewpoints(&cfg).unwrap();
        let hemi = sample_viewpoints(&ViewSamplingConfig { hemisphere_only: true, ..cfg.clone() }).unwrap();
        for h in &hemi {
            assert_eq!(full[h.lattice_index], *h);
        }
        let rolls: Vec<f64> = (0..50).map(|i| roll_for_view(&cfg, i)).collect();
        assert!(rolls.iter().all(|r| (-PI..=PI).contains(r)));
        assert!(rolls.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn config_validation() {
        let ok = ViewSamplingConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ViewSamplingConfig { n_views: 0, ..ok.clone() },
            ViewSamplingConfig { radius_m: 0.0, ..ok.clone() },
            ViewSamplingConfig { roll_min_rad: 1.0, roll_max_rad: 0.0, ..ok.clone() },
            ViewSamplingConfig { roll_max_rad: 4.0, ..ok.clone() },
        ] {
            assert!(matches!(sample_viewpoints(&bad), Err(ViewError::InvalidConfig(_))));
        }
    }
}
