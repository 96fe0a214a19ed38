//! Category template point clouds.
//!
//! A template is built from one reference instance: its merged mesh is
//! canonicalized (bounding-box center at the origin, unit box diagonal, axes
//! unchanged), Poisson-disk sampled over its surface, then reduced to `k`
//! points with farthest point sampling.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::ModelAsset;
use crate::cloud::{centroid, Frame, PointCloud};
use crate::mesh::TriangleMesh;
use crate::ply;
use crate::se3::{Scale3, Se3Pose};

/// Default number of template points.
pub const DEFAULT_TEMPLATE_SIZE: usize = 512;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("mesh bounding box has zero diagonal")]
    DegenerateExtent,
    #[error("poisson radius {radius} accepted only {accepted} samples (need at least 4)")]
    RadiusTooLarge { radius: f64, accepted: usize },
    #[error("invalid poisson radius {0}")]
    InvalidRadius(f64),
    #[error("cannot select {k} points from {available}")]
    InvalidK { k: usize, available: usize },
    #[error("start index {0} out of range")]
    InvalidStart(usize),
    #[error("template io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed template {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

/// Canonical mesh plus the mapping that produced it:
/// `canonical = applied_scale * applied_transform(original)`.
#[derive(Debug, Clone)]
pub struct CanonicalizationResult {
    pub canonical_mesh: TriangleMesh,
    pub applied_transform: Se3Pose,
    pub applied_scale: f64,
}

impl CanonicalizationResult {
    /// Maps a point from the original frame into the canonical frame.
    pub fn to_canonical(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.applied_transform.transform_point(p).coords * self.applied_scale)
    }
}

pub fn canonicalize(mesh: &TriangleMesh) -> Result<CanonicalizationResult, TemplateError> {
    let bbox = mesh.bbox();
    let diag = bbox.diagonal();
    if !(diag > 0.0 && diag.is_finite()) {
        return Err(TemplateError::DegenerateExtent);
    }
    let shift = -bbox.center().coords;
    let scale = 1.0 / diag;
    Ok(CanonicalizationResult {
        canonical_mesh: mesh.shifted_scaled(&shift, scale),
        applied_transform: Se3Pose::from_translation(shift),
        applied_scale: scale,
    })
}

/// Surface samples with pairwise distance at least `radius`, by
/// area-weighted dart throwing with rejection.
///
/// The dart budget is `max(2000, 40 · area / (π r²))`; the run is fully
/// determined by `seed`.
pub fn poisson_disk_sample(mesh: &TriangleMesh, radius: f64, seed: u64) -> Result<PointCloud, TemplateError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(TemplateError::InvalidRadius(radius));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for i in 0..mesh.faces().len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    let budget = ((40.0 * total / (std::f64::consts::PI * radius * radius)).ceil() as usize).clamp(2000, 50_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = PoissonGrid::new(radius);
    let mut accepted: Vec<Point3<f64>> = Vec::new();
    for _ in 0..budget {
        let pick = rng.random::<f64>() * total;
        let tri = cumulative.partition_point(|c| *c <= pick).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(tri);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let p = Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - r2)) + c.coords * (s * r2));
        if grid.accepts(&p, &accepted) {
            grid.insert(&p, accepted.len());
            accepted.push(p);
        }
    }
    if accepted.len() < 4 {
        return Err(TemplateError::RadiusTooLarge { radius, accepted: accepted.len() });
    }
    Ok(PointCloud::new(accepted, Frame::Object))
}

struct PoissonGrid {
    cell: f64,
    radius_sq: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl PoissonGrid {
    fn new(radius: f64) -> Self {
        Self { cell: radius, radius_sq: radius * radius, cells: HashMap::new() }
    }

    fn key(&self, p: &Point3<f64>) -> [i64; 3] {
        [(p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64, (p.z / self.cell).floor() as i64]
    }

    fn accepts(&self, p: &Point3<f64>, pts: &[Point3<f64>]) -> bool {
        let k = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if ids.iter().any(|&i| (pts[i] - p).norm_squared() < self.radius_sq) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, p: &Point3<f64>, id: usize) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }
}

/// Where farthest point sampling starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartRule {
    /// The input point nearest the centroid (lowest index on ties).
    #[default]
    NearestCentroid,
    Index(usize),
}

/// Indices chosen by greedy farthest point sampling, in selection order.
///
/// Each step adds the point whose distance to the selected set is largest;
/// ties go to the lowest index.
pub fn farthest_point_indices(points: &[Point3<f64>], k: usize, start: StartRule) -> Result<Vec<usize>, TemplateError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(TemplateError::InvalidK { k, available: n });
    }
    let first = match start {
        StartRule::Index(i) if i < n => i,
        StartRule::Index(i) => return Err(TemplateError::InvalidStart(i)),
        StartRule::NearestCentroid => {
            let c = centroid(points).unwrap();
            let mut best = 0;
            for (i, p) in points.iter().enumerate() {
                if (p - c).norm_squared() < (points[best] - c).norm_squared() {
                    best = i;
                }
            }
            best
        }
    };
    let mut chosen = Vec::with_capacity(k);
    chosen.push(first);
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while chosen.len() < k {
        let mut next = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for (i, d) in dist.iter().enumerate() {
            if *d > far {
                far = *d;
                next = i;
            }
        }
        chosen.push(next);
        let q = points[next];
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - q).norm_squared());
        }
    }
    Ok(chosen)
}

pub fn farthest_point_sample(cloud: &PointCloud, k: usize, start: StartRule) -> Result<PointCloud, TemplateError> {
    let idx = farthest_point_indices(&cloud.points, k, start)?;
    Ok(PointCloud::new(idx.into_iter().map(|i| cloud.points[i]).collect(), cloud.frame))
}

/// Canonical-frame point template for one category.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplatePointCloud {
    pub category: String,
    pub source_instance_id: String,
    pub points: Vec<Point3<f64>>,
    /// Extents of the source instance's canonical bounding box (diagonal 1).
    pub canonical_extents: Scale3,
}

impl TemplatePointCloud {
    pub fn k(&self) -> usize {
        self.points.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateParams {
    pub k: usize,
    pub poisson_radius: f64,
    pub seed: u64,
}

impl Default for TemplateParams {
    fn default() -> Self {
        Self { k: DEFAULT_TEMPLATE_SIZE, poisson_radius: 0.02, seed: 0 }
    }
}

pub fn build_template(model: &ModelAsset, params: &TemplateParams) -> Result<TemplatePointCloud, TemplateError> {
    let canon = canonicalize(&model.merged_mesh())?;
    let samples = poisson_disk_sample(&canon.canonical_mesh, params.poisson_radius, params.seed)?;
    let picked = farthest_point_sample(&samples, params.k, StartRule::NearestCentroid)?;
    let e = canon.canonical_mesh.bbox().extents();
    Ok(TemplatePointCloud {
        category: model.category().to_string(),
        source_instance_id: model.instance_id().to_string(),
        points: picked.points,
        canonical_extents: Scale3::new(e.x, e.y, e.z).map_err(|_| TemplateError::DegenerateExtent)?,
    })
}

/// JSON sidecar written next to a template PLY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSidecar {
    pub category: String,
    pub k: usize,
    pub source_instance_id: String,
    pub poisson_radius: f64,
    pub seed: u64,
    pub canonical_extents: Scale3,
}

/// Writes `<dir>/<category>.ply` and `<dir>/<category>.json`.
pub fn write_template(dir: &Path, template: &TemplatePointCloud, params: &TemplateParams) -> Result<(PathBuf, PathBuf), TemplateError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TemplateError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let ply_path = dir.join(format!("{}.ply", template.category));
    let json_path = dir.join(format!("{}.json", template.category));
    let mut buf = Vec::new();
    ply::write_points(&mut buf, &template.points, &["frame canonical"]).map_err(io(&ply_path))?;
    std::fs::write(&ply_path, buf).map_err(io(&ply_path))?;
    let sidecar = TemplateSidecar {
        category: template.category.clone(),
        k: template.k(),
        source_instance_id: template.source_instance_id.clone(),
        poisson_radius: params.poisson_radius,
        seed: params.seed,
        canonical_extents: template.canonical_extents,
    };
    let mut f = std::fs::File::create(&json_path).map_err(io(&json_path))?;
    serde_json::to_writer_pretty(&mut f, &sidecar).map_err(|e| TemplateError::Malformed { path: json_path.clone(), reason: e.to_string() })?;
    f.write_all(b"\n").map_err(io(&json_path))?;
    Ok((ply_path, json_path))
}

/// Reads a template from its sidecar path (the PLY is found next to it).
pub fn read_template(json_path: &Path) -> Result<TemplatePointCloud, TemplateError> {
    let malformed = |reason: String| TemplateError::Malformed { path: json_path.to_path_buf(), reason };
    let text = std::fs::read(json_path).map_err(|source| TemplateError::Io { path: json_path.to_path_buf(), source })?;
    let sidecar: TemplateSidecar = serde_json::from_slice(&text).map_err(|e| malformed(e.to_string()))?;
    let ply_path = json_path.with_extension("ply");
    let bytes = std::fs::read(&ply_path).map_err(|source| TemplateError::Io { path: ply_path.clone(), source })?;
    let data = ply::parse(&bytes).map_err(|e| malformed(e.to_string()))?;
    if data.vertices.len() != sidecar.k {
        return Err(malformed(format!("sidecar says k={} but PLY has {} points", sidecar.k, data.vertices.len())));
    }
    Ok(TemplatePointCloud {
        category: sidecar.category,
        source_instance_id: sidecar.source_instance_id,
        points: data.vertices,
        canonical_extents: sidecar.canonical_extents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;
    use nalgebra::Vector3;

    fn min_pairwise(points: &[Point3<f64>]) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                m = m.min((points[i] - points[j]).norm());
            }
        }
        m
    }

    #[test]
    fn canonicalize_examples() {
        let cube = primitives::unit_cube();
        let c = canonicalize(&cube).unwrap();
        assert!((c.applied_scale - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(c.canonical_mesh.bbox().center().coords.norm() < 1e-12);

        let moved = cube.shifted_scaled(&Vector3::new(1.0, 1.0, 1.0), 1.0);
        let c2 = canonicalize(&moved).unwrap();
        assert!((c2.applied_transform.translation() - Vector3::new(-1.0, -1.0, -1.0)).norm() < 1e-12);
        assert!((c2.applied_scale - c.applied_scale).abs() < 1e-15);
        assert!((c2.to_canonical(&Point3::new(1.5, 1.5, 1.5)) - Point3::new(0.5, 0.5, 0.5) / 3f64.sqrt()).norm() < 1e-12);

        let w = primitives::wedge_mesh();
        let again = canonicalize(&canonicalize(&w).unwrap().canonical_mesh).unwrap();
        assert!(again.applied_transform.translation().norm() < 1e-9);
        assert!((again.applied_scale - 1.0).abs() < 1e-9);
        let b = again.canonical_mesh.bbox();
        assert!((b.diagonal() - 1.0).abs() < 1e-9);
        assert!(b.center().coords.norm() < 1e-9);
    }

    #[test]
    fn canonicalize_is_scale_invariant() {
        let w = primitives::bracket_mesh();
        let a = canonicalize(&w).unwrap().canonical_mesh;
        let b = canonicalize(&w.shifted_scaled(&Vector3::zeros(), 3.7)).unwrap().canonical_mesh;
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn canonicalize_accepts_sliver() {
        let sliver = TriangleMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1e-3, 0.0, 0.0), Point3::new(0.0, 1e-3, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(canonicalize(&sliver).is_ok());
    }

    #[test]
    fn poisson_min_distance_and_packing_bound() {
        let sq = primitives::unit_square();
        let r = 0.05;
        let cloud = poisson_disk_sample(&sq, r, 9).unwrap();
        assert!(min_pairwise(&cloud.points) >= r);
        let bound = 4.0 * 1.0 / (std::f64::consts::PI * r * r) * 1.2;
        assert!((cloud.len() as f64) <= bound, "{} > {bound}", cloud.len());
        assert!(cloud.points.iter().all(|p| p.z == 0.0 && p.x.abs() <= 0.5 && p.y.abs() <= 0.5));
        assert_eq!(poisson_disk_sample(&sq, r, 9).unwrap(), cloud);
    }

    #[test]
    fn poisson_radius_errors() {
        let tiny = primitives::unit_cube().shifted_scaled(&Vector3::zeros(), 0.01);
        assert!(matches!(poisson_disk_sample(&tiny, 1.0, 0), Err(TemplateError::RadiusTooLarge { .. })));
        assert!(matches!(poisson_disk_sample(&tiny, 0.0, 0), Err(TemplateError::InvalidRadius(_))));
    }

    #[test]
    fn fps_collinear_example() {
        let pts: Vec<Point3<f64>> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(farthest_point_indices(&pts, 2, StartRule::Index(0)).unwrap(), vec![0, 3]);
        let all = farthest_point_indices(&pts, 4, StartRule::NearestCentroid).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        // centroid 1.5 is equidistant from 1 and 2: lowest index wins
        assert_eq!(all[0], 1);
        assert!(matches!(farthest_point_indices(&pts, 5, StartRule::default()), Err(TemplateError::InvalidK { .. })));
        assert!(matches!(farthest_point_indices(&pts, 0, StartRule::default()), Err(TemplateError::InvalidK { .. })));
        assert!(matches!(farthest_point_indices(&pts, 2, StartRule::Index(9)), Err(TemplateError::InvalidStart(9))));
    }

    #[test]
    fn fps_prefix_property() {
        let cloud = poisson_disk_sample(&primitives::wedge_mesh(), 0.01, 1).unwrap();
        let a = farthest_point_indices(&cloud.points, 20, StartRule::default()).unwrap();
        let b = farthest_point_indices(&cloud.points, 21, StartRule::default()).unwrap();
        assert_eq!(&b[..20], &a[..]);
    }

    #[test]
    fn template_build_and_io() {
        let model = primitives::fixture_model("bracket", 0);
        let params = TemplateParams { k: 128, poisson_radius: 0.03, seed: 5 };
        let t = build_template(&model, &params).unwrap();
        assert_eq!(t.k(), 128);
        assert!((t.canonical_extents.diagonal() - 1.0).abs() < 1e-12);
        let half = t.canonical_extents.as_vector() / 2.0;
        assert!(t.points.iter().all(|p| (0..3).all(|i| p[i].abs() <= half[i] + 1e-12)));
        assert!(min_pairwise(&t.points) >= params.poisson_radius);
        assert_eq!(build_template(&model, &params).unwrap(), t);

        let dir = tempfile::tempdir().unwrap();
        let (_, json) = write_template(dir.path(), &t, &params).unwrap();
        let back = read_template(&json).unwrap();
        assert_eq!(back.k(), 128);
        assert_eq!(back.category, "bracket");
        for (a, b) in t.points.iter().zip(&back.points) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn template_needs_enough_samples() {
        let model = primitives::fixture_model("wedge", 0);
        let params = TemplateParams { k: 10_000, poisson_radius: 0.1, seed: 0 };
        assert!(matches!(build_template(&model, &params), Err(TemplateError::InvalidK { .. })));
    }
}
