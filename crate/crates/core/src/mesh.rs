//! Triangle meshes and axis-aligned bounds.

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::se3::{DegenerateScale, Scale3, Se3Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("every face has zero area")]
    AllDegenerate,
}

/// Indexed triangle mesh in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = vertices.iter().position(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: idx, count: vertices.len() });
                }
            }
        }
        let mesh = Self { vertices, faces };
        if !(0..mesh.faces.len()).any(|i| mesh.triangle_area(i) > 0.0) {
            return Err(MeshError::AllDegenerate);
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[i];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Unit normal from the winding order, or zero for degenerate faces.
    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter()).expect("validated mesh has vertices")
    }

    pub fn transformed(&self, pose: &Se3Pose) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Applies `v -> (v + offset) * factor` to every vertex.
    pub fn shifted_scaled(&self, offset: &Vector3<f64>, factor: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| Point3::from((v.coords + offset) * factor)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Concatenates meshes, re-indexing faces.
    pub fn merge<'a, I: IntoIterator<Item = &'a TriangleMesh>>(meshes: I) -> Result<TriangleMesh, MeshError> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for m in meshes {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        TriangleMesh::new(vertices, faces)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a, I: IntoIterator<Item = &'a Point3<f64>>>(points: I) -> Option<Self> {
        let mut b = Aabb::empty();
        let mut any = false;
        for p in points {
            b.grow(p);
            any = true;
        }
        any.then_some(b)
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn translated(&self, v: &Vector3<f64>) -> Aabb {
        Aabb { min: self.min + v, max: self.max + v }
    }

    /// Index of the longest axis.
    pub fn longest_axis(&self) -> usize {
        self.extents().imax()
    }

    /// Extents as a [`Scale3`]; fails on flat boxes.
    pub fn scale(&self) -> Result<Scale3, DegenerateScale> {
        let e = self.extents();
        Scale3::new(e.x, e.y, e.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> TriangleMesh {
        TriangleMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_meshes() {
        let v = vec![Point3::origin(); 3];
        assert_eq!(TriangleMesh::new(v.clone(), vec![]), Err(MeshError::Empty));
        assert!(matches!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]), Err(MeshError::IndexOutOfRange { index: 3, .. })));
        assert_eq!(TriangleMesh::new(v, vec![[0, 1, 2]]), Err(MeshError::AllDegenerate));
        let nan = vec![Point3::new(f64::NAN, 0.0, 0.0), Point3::origin(), Point3::origin()];
        assert_eq!(TriangleMesh::new(nan, vec![[0, 1, 2]]), Err(MeshError::NonFinite(0)));
    }

    #[test]
    fn area_and_normal() {
        let m = tri();
        assert!((m.surface_area() - 0.5).abs() < 1e-15);
        assert_eq!(m.face_normal(0), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn merge_reindexes() {
        let m = TriangleMesh::merge([&tri(), &tri()]).unwrap();
        assert_eq!(m.vertices().len(), 6);
        assert_eq!(m.faces()[1], [3, 4, 5]);
    }

    #[test]
    fn flat_box_has_no_scale() {
        assert!(tri().bbox().scale().is_err());
    }
}
