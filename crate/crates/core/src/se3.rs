//! Rigid transforms and object extents.

use nalgebra::{Isometry3, Matrix3, Matrix4, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when accepting externally supplied quaternions.
pub const QUAT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("pose contains non-finite values")]
    NonFinite,
    #[error("rotation matrix is not orthonormal with det +1")]
    NotARotation,
}

/// A rigid transform `x -> R x + t`.
///
/// Composition follows the usual left-to-right convention: `a.compose(&b)`
/// applies `b` first, then `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3Pose {
    iso: Isometry3<f64>,
}

impl Default for Se3Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Se3Pose {
    pub fn identity() -> Self {
        Self { iso: Isometry3::identity() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { iso: Isometry3::from_parts(Translation3::from(translation), rotation) }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn from_isometry(iso: Isometry3<f64>) -> Self {
        Self { iso }
    }

    /// Builds a pose from a `(w, x, y, z)` quaternion, which must be unit
    /// length within [`QUAT_NORM_TOL`]. The stored rotation is renormalized.
    pub fn from_wxyz(q: [f64; 4], translation: [f64; 3]) -> Result<Self, PoseError> {
        if q.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(PoseError::NonUnitQuaternion(norm));
        }
        Ok(Self::new(UnitQuaternion::new_normalize(quat), Vector3::from(translation)))
    }

    /// Like [`Se3Pose::from_wxyz`] but keeps the components exactly as given,
    /// so a pose read from text serializes back to the same digits. The
    /// rotation is then unit only to within [`QUAT_NORM_TOL`].
    pub fn from_wxyz_stored(q: [f64; 4], translation: [f64; 3]) -> Result<Self, PoseError> {
        Self::from_wxyz(q, translation)?;
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        Ok(Self::new(UnitQuaternion::new_unchecked(quat), Vector3::from(translation)))
    }

    /// Builds a pose from a rotation matrix, checking `RᵀR = I` and `det R = +1`
    /// within `tol`.
    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vector3<f64>, tol: f64) -> Result<Self, PoseError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho > tol || (rotation.determinant() - 1.0).abs() > tol {
            return Err(PoseError::NotARotation);
        }
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*rotation);
        Ok(Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation))
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.iso.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.iso.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.iso.translation.vector
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.iso
    }

    /// Quaternion as `(w, x, y, z)`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.iso.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn compose(&self, other: &Se3Pose) -> Se3Pose {
        Se3Pose { iso: self.iso * other.iso }
    }

    pub fn inverse(&self) -> Se3Pose {
        Se3Pose { iso: self.iso.inverse() }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.iso.transform_point(p)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.iso.transform_vector(v)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        self.iso.to_homogeneous()
    }

    /// Largest absolute entry of `self⁻¹·other - I` in homogeneous form; zero
    /// when both transforms agree.
    pub fn max_abs_diff(&self, other: &Se3Pose) -> f64 {
        (self.to_homogeneous() - other.to_homogeneous()).abs().max()
    }

    /// Distance of `self` from the identity transform (max homogeneous entry).
    pub fn identity_deviation(&self) -> f64 {
        (self.to_homogeneous() - Matrix4::identity()).abs().max()
    }

    pub fn is_finite(&self) -> bool {
        self.wxyz().iter().all(|v| v.is_finite()) && self.translation().iter().all(|v| v.is_finite())
    }
}

/// Wire form of a pose: `{quat_wxyz, translation}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub quat_wxyz: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&Se3Pose> for PoseJson {
    fn from(p: &Se3Pose) -> Self {
        let t = p.translation();
        PoseJson { quat_wxyz: p.wxyz(), translation: [t.x, t.y, t.z] }
    }
}

impl TryFrom<PoseJson> for Se3Pose {
    type Error = PoseError;
    fn try_from(p: PoseJson) -> Result<Self, PoseError> {
        Se3Pose::from_wxyz(p.quat_wxyz, p.translation)
    }
}

impl Serialize for Se3Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Se3Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = PoseJson::deserialize(d)?;
        Se3Pose::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("scale components must be finite and > 0, got ({0}, {1}, {2})")]
pub struct DegenerateScale(pub f64, pub f64, pub f64);

/// Per-axis object extents in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale3 {
    v: Vector3<f64>,
}

impl Scale3 {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self, DegenerateScale> {
        let ok = |c: f64| c.is_finite() && c > 0.0;
        if ok(sx) && ok(sy) && ok(sz) {
            Ok(Self { v: Vector3::new(sx, sy, sz) })
        } else {
            Err(DegenerateScale(sx, sy, sz))
        }
    }

    pub fn uniform(s: f64) -> Result<Self, DegenerateScale> {
        Self::new(s, s, s)
    }

    pub fn x(&self) -> f64 {
        self.v.x
    }
    pub fn y(&self) -> f64 {
        self.v.y
    }
    pub fn z(&self) -> f64 {
        self.v.z
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        self.v
    }

    /// Length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        self.v.norm()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, DegenerateScale> {
        Self::new(self.v.x * factor, self.v.y * factor, self.v.z * factor)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.v.x, self.v.y, self.v.z]
    }
}

impl Serialize for Scale3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Scale3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Scale3::new(x, y, z).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Se3Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -1.2, 2.0),
            Vector3::new(0.5, -2.0, 3.0),
        );
        assert!(p.compose(&p.inverse()).identity_deviation() < 1e-12);
        assert!(p.inverse().compose(&p).identity_deviation() < 1e-12);
    }

    #[test]
    fn compose_order_applies_right_operand_first() {
        let rot = Se3Pose::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2));
        let shift = Se3Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let p = rot.compose(&shift).transform_point(&Point3::origin());
        assert!((p - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wxyz_rejects_non_unit() {
        assert!(matches!(
            Se3Pose::from_wxyz([0.9, 0.0, 0.0, 0.0], [0.0; 3]),
            Err(PoseError::NonUnitQuaternion(_))
        ));
        assert!(Se3Pose::from_wxyz([1.0, 0.0, 0.0, 0.0], [0.0; 3]).is_ok());
        assert_eq!(Se3Pose::from_wxyz([f64::NAN, 0.0, 0.0, 0.0], [0.0; 3]), Err(PoseError::NonFinite));
    }

    #[test]
    fn matrix_constructor_checks_orthonormality() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert_eq!(Se3Pose::from_matrix(&m, Vector3::zeros(), 1e-9), Err(PoseError::NotARotation));
        let r = UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3).to_rotation_matrix().into_inner();
        let p = Se3Pose::from_matrix(&r, Vector3::zeros(), 1e-9).unwrap();
        assert!((p.rotation_matrix() - r).abs().max() < 1e-12);
    }

    #[test]
    fn pose_json_roundtrip() {
        let p = Se3Pose::new(UnitQuaternion::from_euler_angles(0.4, 0.1, -0.7), Vector3::new(1.0, 2.0, 3.0));
        let text = serde_json::to_string(&p).unwrap();
        let back: Se3Pose = serde_json::from_str(&text).unwrap();
        assert!(p.max_abs_diff(&back) < 1e-15);
    }

    #[test]
    fn scale_rejects_non_positive() {
        assert!(Scale3::new(1.0, 0.0, 1.0).is_err());
        assert!(Scale3::new(1.0, -1.0, 1.0).is_err());
        assert!(Scale3::new(1.0, f64::INFINITY, 1.0).is_err());
        assert!((Scale3::new(3.0, 4.0, 12.0).unwrap().diagonal() - 13.0).abs() < 1e-12);
    }
}
