//! Mesh loading and multi-part model assets.
//!
//! A model asset is described by a JSON manifest:
//!
//! ```json
//! {
//!   "category": "bottle",
//!   "instance_id": "bottle_001",
//!   "unit_scale": 1.0,
//!   "parts": [
//!     { "mesh_path": "body.obj",
//!       "transform": { "quat_wxyz": [1, 0, 0, 0], "translation": [0, 0, 0] } }
//!   ]
//! }
//! ```
//!
//! `mesh_path` is resolved relative to the manifest. `unit_scale` (default 1)
//! converts mesh units to meters and is applied before the part transform.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Aabb, MeshError, TriangleMesh};
use crate::ply;
use crate::se3::{PoseJson, Scale3, Se3Pose};

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("mesh {0} has no faces")]
    EmptyMesh(PathBuf),
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("invalid model manifest {path}: {reason}")]
    InvalidManifest { path: PathBuf, reason: String },
    #[error("degenerate extent: {0:?}")]
    DegenerateExtent([f64; 3]),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, AssetError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => AssetError::FileNotFound(path.to_path_buf()),
        _ => AssetError::Io { path: path.to_path_buf(), source: e },
    })
}

fn mesh_from_parts(path: &Path, vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<TriangleMesh, AssetError> {
    TriangleMesh::new(vertices, faces).map_err(|e| match e {
        MeshError::Empty => AssetError::EmptyMesh(path.to_path_buf()),
        other => AssetError::MalformedFile { path: path.to_path_buf(), reason: other.to_string() },
    })
}

/// Loads an OBJ or binary PLY mesh, keeping the file's vertex order.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, AssetError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => {
            let bytes = read_bytes(path)?;
            let text = String::from_utf8_lossy(&bytes);
            let (v, f) = parse_obj(&text).map_err(|reason| AssetError::MalformedFile { path: path.to_path_buf(), reason })?;
            mesh_from_parts(path, v, f)
        }
        Some("ply") => {
            let bytes = read_bytes(path)?;
            let data = ply::parse(&bytes)
                .map_err(|e| AssetError::MalformedFile { path: path.to_path_buf(), reason: e.to_string() })?;
            mesh_from_parts(path, data.vertices, data.faces)
        }
        _ => Err(AssetError::UnsupportedFormat(path.to_path_buf())),
    }
}

/// Parses `v` and `f` records. Faces accept `i`, `i/t`, `i//n`, `i/t/n` and
/// negative (relative) indices; polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<(Vec<Point3<f64>>, Vec<[u32; 3]>), String> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in c.iter_mut() {
                    *slot = tok
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| format!("line {}: bad vertex", lineno + 1))?;
                }
                vertices.push(Point3::from(c));
            }
            Some("f") => {
                let idx: Vec<u32> = tok
                    .map(|t| resolve_obj_index(t, vertices.len()))
                    .collect::<Option<_>>()
                    .ok_or_else(|| format!("line {}: bad face index", lineno + 1))?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face with fewer than 3 vertices", lineno + 1));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn resolve_obj_index(token: &str, seen: usize) -> Option<u32> {
    let i: i64 = token.split('/').next()?.parse().ok()?;
    let zero_based = if i > 0 { i - 1 } else if i < 0 { seen as i64 + i } else { return None };
    u32::try_from(zero_based).ok()
}

/// One rigid part of a model, with its fixed part-to-model transform.
#[derive(Debug, Clone)]
pub struct PartAsset {
    pub mesh: TriangleMesh,
    pub local_transform: Se3Pose,
}

impl PartAsset {
    pub fn new(mesh: TriangleMesh, local_transform: Se3Pose) -> Self {
        Self { mesh, local_transform }
    }
}

/// A category-tagged object instance built from one or more parts.
#[derive(Debug, Clone)]
pub struct ModelAsset {
    category: String,
    instance_id: String,
    parts: Vec<PartAsset>,
}

impl ModelAsset {
    pub fn new(category: impl Into<String>, instance_id: impl Into<String>, parts: Vec<PartAsset>) -> Result<Self, AssetError> {
        let category = category.into();
        let instance_id = instance_id.into();
        let bad = |reason: &str| AssetError::InvalidManifest { path: PathBuf::from(&instance_id), reason: reason.into() };
        if category.trim().is_empty() {
            return Err(bad("empty category"));
        }
        if instance_id.trim().is_empty() {
            return Err(bad("empty instance id"));
        }
        if parts.is_empty() {
            return Err(bad("no parts"));
        }
        Ok(Self { category, instance_id, parts })
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    pub fn parts(&self) -> &[PartAsset] {
        &self.parts
    }

    /// All parts merged into one mesh in the model frame.
    pub fn merged_mesh(&self) -> TriangleMesh {
        let placed: Vec<TriangleMesh> = self.parts.iter().map(|p| p.mesh.transformed(&p.local_transform)).collect();
        TriangleMesh::merge(placed.iter()).expect("parts are valid meshes")
    }

    /// Returns a copy with every part moved by `offset` in the model frame.
    pub fn translated(&self, offset: &Vector3<f64>) -> ModelAsset {
        let shift = Se3Pose::from_translation(*offset);
        let parts = self
            .parts
            .iter()
            .map(|p| PartAsset::new(p.mesh.clone(), shift.compose(&p.local_transform)))
            .collect();
        ModelAsset { category: self.category.clone(), instance_id: self.instance_id.clone(), parts }
    }
}

/// Union of all part bounds after applying each part transform.
pub fn global_bbox(model: &ModelAsset) -> Aabb {
    let mut bbox = Aabb::empty();
    for part in model.parts() {
        let mut local = Aabb::empty();
        for v in part.mesh.vertices() {
            local.grow(&part.local_transform.transform_point(v));
        }
        bbox = bbox.union(&local);
    }
    bbox
}

/// Per-axis extents of a bounding box.
pub fn model_scale(bbox: &Aabb) -> Result<Scale3, AssetError> {
    let e = bbox.extents();
    Scale3::new(e.x, e.y, e.z).map_err(|_| AssetError::DegenerateExtent([e.x, e.y, e.z]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartManifest {
    pub mesh_path: PathBuf,
    pub transform: PoseJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub category: String,
    pub instance_id: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub unit_scale: f64,
    pub parts: Vec<PartManifest>,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// Loads a model manifest and all of its part meshes.
pub fn load_model(manifest_path: &Path) -> Result<ModelAsset, AssetError> {
    let bytes = read_bytes(manifest_path)?;
    let invalid = |reason: String| AssetError::InvalidManifest { path: manifest_path.to_path_buf(), reason };
    let manifest: ModelManifest = serde_json::from_slice(&bytes).map_err(|e| invalid(e.to_string()))?;
    if !(manifest.unit_scale.is_finite() && manifest.unit_scale > 0.0) {
        return Err(invalid(format!("unit_scale {} must be > 0", manifest.unit_scale)));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut parts = Vec::with_capacity(manifest.parts.len());
    for part in &manifest.parts {
        let transform = Se3Pose::try_from(part.transform).map_err(|e| invalid(e.to_string()))?;
        let mut mesh = load_mesh(&dir.join(&part.mesh_path))?;
        if manifest.unit_scale != 1.0 {
            mesh = mesh.shifted_scaled(&Vector3::zeros(), manifest.unit_scale);
        }
        parts.push(PartAsset::new(mesh, transform));
    }
    ModelAsset::new(manifest.category, manifest.instance_id, parts).map_err(|e| invalid(e.to_string()))
}

/// Finds every `*.model.json` manifest below `root`, sorted by path.
pub fn discover_models(root: &Path) -> Result<Vec<PathBuf>, AssetError> {
    if !root.exists() {
        return Err(AssetError::FileNotFound(root.to_path_buf()));
    }
    let mut found: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.file_name().to_string_lossy().ends_with(".model.json"))
        .map(|e| e.into_path())
        .collect();
    found.sort();
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;
    use nalgebra::UnitQuaternion;

    const CUBE_OBJ: &str = "\
# unit cube
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

    #[test]
    fn cube_obj_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cube.obj");
        std::fs::write(&p, CUBE_OBJ).unwrap();
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.faces().len(), 12);
        assert_eq!(m.vertices()[1], Point3::new(0.5, -0.5, -0.5));
    }

    #[test]
    fn out_of_range_index_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        std::fs::write(&p, CUBE_OBJ.replace("f 4 5 8", "f 4 5 9")).unwrap();
        assert!(matches!(load_mesh(&p), Err(AssetError::MalformedFile { .. })));
    }

    #[test]
    fn missing_empty_and_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_mesh(&dir.path().join("none.obj")), Err(AssetError::FileNotFound(_))));
        let p = dir.path().join("empty.obj");
        std::fs::write(&p, "v 0 0 0\nv 1 0 0\n").unwrap();
        assert!(matches!(load_mesh(&p), Err(AssetError::EmptyMesh(_))));
        let p = dir.path().join("x.stl");
        std::fs::write(&p, "solid").unwrap();
        assert!(matches!(load_mesh(&p), Err(AssetError::UnsupportedFormat(_))));
        let p = dir.path().join("garbage.obj");
        std::fs::write(&p, "v 1 2\nf 1 2 3\n").unwrap();
        assert!(matches!(load_mesh(&p), Err(AssetError::MalformedFile { .. })));
    }

    #[test]
    fn obj_index_forms() {
        let (v, f) = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2//2 3/3 4\nf -4 -3 -2\n").unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(f, vec![[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
        assert!(parse_obj("f 0 1 2").is_err());
    }

    #[test]
    fn ply_mesh_loads() {
        let dir = tempfile::tempdir().unwrap();
        let cube = primitives::unit_cube();
        let p = dir.path().join("cube.ply");
        ply::write_mesh(std::fs::File::create(&p).unwrap(), cube.vertices(), cube.faces()).unwrap();
        assert_eq!(load_mesh(&p).unwrap(), cube);
    }

    #[test]
    fn bbox_examples() {
        let cube = primitives::unit_cube();
        let one = ModelAsset::new("box", "a", vec![PartAsset::new(cube.clone(), Se3Pose::identity())]).unwrap();
        let b = global_bbox(&one);
        assert_eq!(b.min, Point3::new(-0.5, -0.5, -0.5));
        assert_eq!(b.max, Point3::new(0.5, 0.5, 0.5));
        let s = model_scale(&b).unwrap();
        assert_eq!(s.to_array(), [1.0, 1.0, 1.0]);

        let two = ModelAsset::new(
            "box",
            "b",
            vec![
                PartAsset::new(cube.clone(), Se3Pose::identity()),
                PartAsset::new(cube, Se3Pose::from_translation(Vector3::new(1.0, 0.0, 0.0))),
            ],
        )
        .unwrap();
        let b = global_bbox(&two);
        assert_eq!(b.min, Point3::new(-0.5, -0.5, -0.5));
        assert_eq!(b.max, Point3::new(1.5, 0.5, 0.5));
    }

    #[test]
    fn scale_examples() {
        let b = Aabb { min: Point3::origin(), max: Point3::new(0.2, 0.1, 0.3) };
        assert_eq!(model_scale(&b).unwrap().to_array(), [0.2, 0.1, 0.3]);
        let flat = ModelAsset::new("sheet", "s", vec![PartAsset::new(primitives::unit_square(), Se3Pose::identity())]).unwrap();
        assert!(matches!(model_scale(&global_bbox(&flat)), Err(AssetError::DegenerateExtent(_))));
    }

    #[test]
    fn manifest_loads_parts_with_transforms_and_units() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cube.obj"), CUBE_OBJ).unwrap();
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.3);
        let manifest = ModelManifest {
            category: "box".into(),
            instance_id: "box_1".into(),
            unit_scale: 0.01,
            parts: vec![
                PartManifest { mesh_path: "cube.obj".into(), transform: (&Se3Pose::identity()).into() },
                PartManifest {
                    mesh_path: "cube.obj".into(),
                    transform: (&Se3Pose::new(q, Vector3::new(0.0, 0.0, 0.05))).into(),
                },
            ],
        };
        let path = dir.path().join("box_1.model.json");
        std::fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
        let model = load_model(&path).unwrap();
        assert_eq!(model.parts().len(), 2);
        let b = global_bbox(&model);
        assert!((b.max.z - 0.055).abs() < 1e-12);
        assert!((b.min.z + 0.005).abs() < 1e-12);
        assert_eq!(discover_models(dir.path()).unwrap(), vec![path]);
    }

    #[test]
    fn manifest_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.model.json");
        std::fs::write(&p, r#"{"category":"","instance_id":"x","parts":[]}"#).unwrap();
        assert!(matches!(load_model(&p), Err(AssetError::InvalidManifest { .. })));
        std::fs::write(
            &p,
            r#"{"category":"c","instance_id":"x","parts":[{"mesh_path":"a.obj","transform":{"quat_wxyz":[2,0,0,0],"translation":[0,0,0]}}]}"#,
        )
        .unwrap();
        assert!(matches!(load_model(&p), Err(AssetError::InvalidManifest { .. })));
    }
}
