//! CPU ray-cast rendering of depth, masks and shaded intensity.
//!
//! One ray per pixel through the pixel center `(u + 0.5, v + 0.5)`. Depth is
//! the camera-frame z of the nearest hit (not the ray length); 0 marks pixels
//! without a hit. Both triangle faces are intersected.

mod bvh;

pub use bvh::{brute_force_hit, build_accel, Hit, Ray, RayAccel, LEAF_SIZE};

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::ModelAsset;
use crate::cloud::{Frame, PointCloud};
use crate::mesh::TriangleMesh;
use crate::se3::Se3Pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("image dimensions {0}x{1} do not match {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Pinhole camera parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, RenderError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: String| Err(RenderError::InvalidIntrinsics(m));
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return bad(format!("focal lengths ({}, {}) must be > 0", self.fx, self.fy));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return bad(format!("principal point ({}, {}) outside {}x{}", self.cx, self.cy, self.width, self.height));
        }
        Ok(())
    }

    /// 640x480 with a 525 px focal length and centered principal point.
    pub fn vga() -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-frame direction through the center of pixel `(u, v)`, with z = 1.
    #[inline]
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        Vector3::new((u as f64 + 0.5 - self.cx) / self.fx, (v as f64 + 0.5 - self.cy) / self.fy, 1.0)
    }

    /// Lateral size of one pixel at `depth` meters (the larger of the two axes).
    pub fn pixel_footprint(&self, depth: f64) -> f64 {
        depth / self.fx.min(self.fy)
    }

    /// Continuous pixel coordinates of a camera-frame point.
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Same rays on a canvas enlarged by `pad` pixels on every side.
    pub fn padded(&self, pad_x: u32, pad_y: u32) -> Self {
        Self {
            cx: self.cx + pad_x as f64,
            cy: self.cy + pad_y as f64,
            width: self.width + 2 * pad_x,
            height: self.height + 2 * pad_y,
            ..*self
        }
    }
}

/// Clip range for accepted hits, in camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRange {
    pub near: f64,
    pub far: f64,
}

impl Default for ClipRange {
    fn default() -> Self {
        Self { near: 0.01, far: 10.0 }
    }
}

/// Row-major depth in meters; 0 where nothing was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    /// Smallest non-zero depth.
    pub fn min_depth(&self) -> Option<f64> {
        self.data.iter().copied().filter(|d| *d > 0.0).min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl InstanceMask {
    pub fn from_depth(depth: &DepthImage) -> Self {
        Self { width: depth.width, height: depth.height, data: depth.data.iter().map(|d| *d > 0.0).collect() }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|m| **m).count()
    }
}

/// Shaded intensity in `[0, 1]` with a flat white albedo; background 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadedImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl ShadedImage {
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    /// Interleaved 8-bit RGB (gray).
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|i| {
                let b = (i.clamp(0.0, 1.0) * 255.0).round() as u8;
                [b, b, b]
            })
            .collect()
    }
}

/// A model's merged geometry with its ray acceleration structure, placed at
/// the world origin. Immutable and shareable across render threads.
#[derive(Debug, Clone)]
pub struct Scene {
    mesh: TriangleMesh,
    accel: RayAccel,
    clip: ClipRange,
}

impl Scene {
    pub fn new(model: &ModelAsset) -> Self {
        Self::from_mesh(model.merged_mesh())
    }

    pub fn from_mesh(mesh: TriangleMesh) -> Self {
        let accel = RayAccel::new(&mesh);
        Self { mesh, accel, clip: ClipRange::default() }
    }

    pub fn with_clip(mut self, clip: ClipRange) -> Self {
        self.clip = clip;
        self
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn accel(&self) -> &RayAccel {
        &self.accel
    }

    /// Pixel rectangle `[u0, u1) x [v0, v1)` that can contain hits, from the
    /// projected mesh bounds. The full image when the bounds straddle the
    /// near plane.
    fn footprint(&self, camera_pose: &Se3Pose, k: &CameraIntrinsics) -> Option<(u32, u32, u32, u32)> {
        let b = self.accel.bounds();
        let world_to_cam = camera_pose.inverse();
        let mut umin = f64::INFINITY;
        let mut umax = f64::NEG_INFINITY;
        let mut vmin = f64::INFINITY;
        let mut vmax = f64::NEG_INFINITY;
        let mut all_front = true;
        let mut all_behind = true;
        for i in 0..8 {
            let corner = Point3::new(
                if i & 1 == 0 { b.min.x } else { b.max.x },
                if i & 2 == 0 { b.min.y } else { b.max.y },
                if i & 4 == 0 { b.min.z } else { b.max.z },
            );
            let c = world_to_cam.transform_point(&corner);
            if c.z <= self.clip.near * 0.5 {
                all_front = false;
            }
            if c.z >= self.clip.near {
                all_behind = false;
            }
            if c.z > 0.0 {
                let (u, v) = k.project(&c);
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
        if all_behind {
            return None;
        }
        if !all_front {
            return Some((0, k.width, 0, k.height));
        }
        let clamp = |x: f64, hi: u32| x.max(0.0).min(hi as f64) as u32;
        let (u0, u1) = (clamp(umin.floor() - 1.0, k.width), clamp(umax.ceil() + 1.0, k.width));
        let (v0, v1) = (clamp(vmin.floor() - 1.0, k.height), clamp(vmax.ceil() + 1.0, k.height));
        (u0 < u1 && v0 < v1).then_some((u0, u1, v0, v1))
    }

    /// Nearest hit per pixel.
    pub fn trace(&self, camera_pose: &Se3Pose, k: &CameraIntrinsics) -> Vec<Option<Hit>> {
        let mut hits = vec![None; k.pixel_count()];
        let Some((u0, u1, v0, v1)) = self.footprint(camera_pose, k) else {
            return hits;
        };
        let origin = Point3::from(camera_pose.translation());
        let rot = camera_pose.rotation_matrix();
        hits.par_chunks_mut(k.width as usize)
            .enumerate()
            .filter(|(v, _)| (*v as u32) >= v0 && (*v as u32) < v1)
            .for_each(|(v, row)| {
                for u in u0..u1 {
                    let ray = Ray::new(origin, rot * k.pixel_ray(u, v as u32));
                    row[u as usize] = self.accel.nearest_hit(&ray, self.clip.near, self.clip.far);
                }
            });
        hits
    }

    /// Depth image and instance mask from `camera_pose` (camera-to-world).
    pub fn render_depth(&self, camera_pose: &Se3Pose, k: &CameraIntrinsics) -> (DepthImage, InstanceMask) {
        let hits = self.trace(camera_pose, k);
        let depth = DepthImage {
            width: k.width,
            height: k.height,
            data: hits.iter().map(|h| h.map_or(0.0, |h| h.t)).collect(),
        };
        let mask = InstanceMask::from_depth(&depth);
        (depth, mask)
    }

    /// Lambertian intensity `max(0, n·(-light_dir))` with `light_dir` in world
    /// coordinates. Normals are flipped to face the camera.
    pub fn render_shaded(&self, camera_pose: &Se3Pose, k: &CameraIntrinsics, light_dir: &Vector3<f64>) -> ShadedImage {
        let hits = self.trace(camera_pose, k);
        let light = light_dir.try_normalize(0.0).unwrap_or(Vector3::z());
        let rot = camera_pose.rotation_matrix();
        let mut data = vec![0f32; k.pixel_count()];
        for (i, h) in hits.iter().enumerate() {
            if let Some(h) = h {
                let (u, v) = ((i % k.width as usize) as u32, (i / k.width as usize) as u32);
                let ray_dir = rot * k.pixel_ray(u, v);
                let mut n = self.mesh.face_normal(h.triangle as usize);
                if n.dot(&ray_dir) > 0.0 {
                    n = -n;
                }
                data[i] = n.dot(&(-light)).clamp(0.0, 1.0) as f32;
            }
        }
        ShadedImage { width: k.width, height: k.height, data }
    }

    /// Fraction of the object's silhouette that falls inside the image, from
    /// a render on a canvas padded by half the image size on each side.
    pub fn frame_visibility(&self, camera_pose: &Se3Pose, k: &CameraIntrinsics) -> f64 {
        let (px, py) = (k.width / 2, k.height / 2);
        let big = k.padded(px, py);
        let (_, mask) = self.render_depth(camera_pose, &big);
        let total = mask.count();
        if total == 0 {
            return 0.0;
        }
        let mut inside = 0usize;
        for v in py..py + k.height {
            for u in px..px + k.width {
                inside += mask.get(u, v) as usize;
            }
        }
        inside as f64 / total as f64
    }
}

pub fn render_depth(model: &ModelAsset, camera_pose: &Se3Pose, k: &CameraIntrinsics) -> (DepthImage, InstanceMask) {
    Scene::new(model).render_depth(camera_pose, k)
}

pub fn render_rgb_lambertian(model: &ModelAsset, camera_pose: &Se3Pose, k: &CameraIntrinsics, light_dir: &Vector3<f64>) -> ShadedImage {
    Scene::new(model).render_shaded(camera_pose, k, light_dir)
}

/// Back-projects masked pixels into a camera-frame point cloud, in row-major
/// pixel order.
pub fn depth_to_pointcloud(depth: &DepthImage, mask: &InstanceMask, k: &CameraIntrinsics) -> Result<PointCloud, RenderError> {
    if depth.width != mask.width || depth.height != mask.height {
        return Err(RenderError::DimensionMismatch(depth.width, depth.height, mask.width, mask.height));
    }
    if depth.width != k.width || depth.height != k.height {
        return Err(RenderError::DimensionMismatch(depth.width, depth.height, k.width, k.height));
    }
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if mask.get(u, v) {
                let d = depth.get(u, v);
                points.push(Point3::from(k.pixel_ray(u, v) * d));
            }
        }
    }
    Ok(PointCloud::new(points, Frame::Camera))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::PartAsset;
    use crate::primitives;
    use crate::views::{apply_inplane_roll, look_at_pose};

    fn cube_scene() -> Scene {
        Scene::from_mesh(primitives::unit_cube())
    }

    fn small_k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap()
    }

    fn cam(pos: Point3<f64>) -> Se3Pose {
        look_at_pose(pos, Point3::origin(), Vector3::y()).unwrap().pose
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 2.0, 1.0, 2, 2).is_err());
        assert!(CameraIntrinsics::vga().validate().is_ok());
    }

    #[test]
    fn face_on_cube_center_depth() {
        let (depth, mask) = cube_scene().render_depth(&cam(Point3::new(0.0, 0.0, 2.0)), &small_k());
        assert!((depth.get(32, 24) - 1.5).abs() < 1e-12);
        assert_eq!(mask.data, depth.data.iter().map(|d| *d > 0.0).collect::<Vec<_>>());
        assert!(depth.data.iter().all(|d| d.is_finite() && (*d == 0.0 || *d >= 0.01)));
    }

    #[test]
    fn camera_looking_away_sees_nothing() {
        let pose = look_at_pose(Point3::new(0.0, 0.0, 2.0), Point3::new(0.0, 0.0, 5.0), Vector3::y()).unwrap().pose;
        let (depth, mask) = cube_scene().render_depth(&pose, &small_k());
        assert!(depth.data.iter().all(|d| *d == 0.0));
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn sphere_min_depth() {
        let (stacks, slices) = (64, 128);
        let scene = Scene::from_mesh(primitives::uv_sphere(0.3, stacks, slices));
        let k = CameraIntrinsics::vga();
        let (depth, _) = scene.render_depth(&cam(Point3::new(0.0, 0.0, 2.0)), &k);
        // chord sagitta of the coarsest tessellation direction bounds the
        // deviation from the true sphere
        let step = std::f64::consts::PI / stacks.min(slices / 2) as f64;
        let sagitta = 0.3 * (1.0 - (step / 2.0).cos());
        let tol = k.pixel_footprint(1.7) + sagitta;
        let min = depth.min_depth().unwrap();
        assert!((min - 1.7).abs() <= tol, "min depth {min}, tol {tol}");
    }

    #[test]
    fn lambertian_face_on() {
        let scene = cube_scene();
        let pose = cam(Point3::new(0.0, 0.0, 2.0));
        let axis = pose.transform_vector(&Vector3::z());
        let img = scene.render_shaded(&pose, &small_k(), &axis);
        let lit: Vec<f32> = img.data.iter().copied().filter(|i| *i > 0.0).collect();
        assert!(!lit.is_empty());
        assert!(lit.iter().all(|i| (*i - 1.0).abs() < 1e-6));
        let side = scene.render_shaded(&pose, &small_k(), &Vector3::x());
        assert!(side.data.iter().all(|i| *i == 0.0));
        let oblique = scene.render_shaded(&cam(Point3::new(1.5, 1.0, 2.0)), &small_k(), &Vector3::new(-0.3, -0.2, -1.0));
        assert!(oblique.data.iter().all(|i| (0.0..=1.0).contains(i)));
    }

    #[test]
    fn backprojection_examples() {
        let k = small_k();
        let mut depth = DepthImage::zeros(64, 48);
        // pixel (31, 23) has its center at (31.5, 23.5); use a centered
        // principal point on that center
        let k_center = CameraIntrinsics { cx: 31.5, cy: 23.5, ..k };
        depth.data[23 * 64 + 31] = 0.8;
        let mask = InstanceMask::from_depth(&depth);
        let cloud = depth_to_pointcloud(&depth, &mask, &k_center).unwrap();
        assert_eq!(cloud.points, vec![Point3::new(0.0, 0.0, 0.8)]);
        assert_eq!(cloud.frame, Frame::Camera);

        let empty = InstanceMask { width: 64, height: 48, data: vec![false; 64 * 48] };
        assert!(depth_to_pointcloud(&depth, &empty, &k).unwrap().is_empty());
        let wrong = InstanceMask { width: 2, height: 2, data: vec![false; 4] };
        assert!(matches!(depth_to_pointcloud(&depth, &wrong, &k), Err(RenderError::DimensionMismatch(..))));
    }

    #[test]
    fn roll_rotates_the_image_not_the_geometry() {
        let scene = Scene::from_mesh(primitives::wedge_mesh());
        // square image with a centered principal point: a quarter-turn roll
        // maps pixel centers onto pixel centers
        let k = CameraIntrinsics::new(300.0, 300.0, 40.0, 40.0, 80, 80).unwrap();
        let base = cam(Point3::new(0.2, -0.25, 0.3));
        let world = |pose: &Se3Pose| {
            let (d, m) = scene.render_depth(pose, &k);
            depth_to_pointcloud(&d, &m, &k).unwrap().transformed(pose, Frame::Object)
        };
        let a = world(&base);
        assert!(!a.is_empty());
        let nearest = |p: &Point3<f64>, set: &PointCloud| set.points.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
        for angle in [std::f64::consts::FRAC_PI_2, std::f64::consts::PI] {
            let b = world(&apply_inplane_roll(&base, angle));
            let far = b.points.iter().filter(|p| nearest(p, &a) > 1e-9).count();
            assert!((far as f64) <= 0.005 * b.len() as f64, "{far} of {} points unmatched", b.len());
            assert!((a.len() as f64 - b.len() as f64).abs() <= 0.005 * a.len() as f64);
        }
    }

    #[test]
    fn visibility_drops_when_object_leaves_frame() {
        let model = ModelAsset::new("box", "b", vec![PartAsset::new(primitives::unit_cube(), Se3Pose::identity())]).unwrap();
        let scene = Scene::new(&model);
        let k = small_k();
        assert_eq!(scene.frame_visibility(&cam(Point3::new(0.0, 0.0, 6.0)), &k), 1.0);
        let off = look_at_pose(Point3::new(0.0, 0.0, 6.0), Point3::new(2.0, 0.0, 0.0), Vector3::y()).unwrap().pose;
        let vis = scene.frame_visibility(&off, &k);
        assert!(vis > 0.0 && vis < 1.0, "{vis}");
    }
}
