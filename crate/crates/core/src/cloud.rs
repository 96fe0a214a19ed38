use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::mesh::Aabb;
use crate::se3::Se3Pose;

/// Coordinate frame a point cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Camera,
    Object,
    Canonical,
}

impl Frame {
    pub fn as_str(&self) -> &'static str {
        match self {
            Frame::Camera => "camera",
            Frame::Object => "object",
            Frame::Canonical => "canonical",
        }
    }

    pub fn parse(s: &str) -> Option<Frame> {
        match s {
            "camera" => Some(Frame::Camera),
            "object" => Some(Frame::Object),
            "canonical" => Some(Frame::Canonical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.coords.iter().all(|c| c.is_finite()))
    }

    pub fn transformed(&self, pose: &Se3Pose, frame: Frame) -> PointCloud {
        PointCloud { points: self.points.iter().map(|p| pose.transform_point(p)).collect(), frame }
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        centroid(&self.points)
    }

    pub fn bbox(&self) -> Option<Aabb> {
        Aabb::from_points(self.points.iter())
    }
}

pub fn centroid(points: &[Point3<f64>]) -> Option<Point3<f64>> {
    if points.is_empty() {
        return None;
    }
    let sum: Vector3<f64> = points.iter().map(|p| p.coords).sum();
    Some(Point3::from(sum / points.len() as f64))
}

/// Covariance of `points` about `center` (divided by n).
pub fn covariance(points: &[Point3<f64>], center: &Point3<f64>) -> Matrix3<f64> {
    let mut c = Matrix3::zeros();
    for p in points {
        let d = p - center;
        c += d * d.transpose();
    }
    c / points.len().max(1) as f64
}
