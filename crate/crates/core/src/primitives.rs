//! Procedural meshes and fixture models.
//!
//! Used by the test suites, benches and the `assets` CLI command to produce
//! reproducible inputs without shipping binary mesh files.

use std::f64::consts::PI;
use std::fmt::Write;

use nalgebra::{Point2, Point3, Vector3};

use crate::asset::{ModelAsset, PartAsset};
use crate::mesh::TriangleMesh;
use crate::se3::Se3Pose;

/// Axis-aligned cube of side 1 centered at the origin (8 vertices, 12 faces).
pub fn unit_cube() -> TriangleMesh {
    cuboid(Vector3::new(1.0, 1.0, 1.0), 1)
}

/// Unit square in the z = 0 plane (flat, zero z-extent).
pub fn unit_square() -> TriangleMesh {
    TriangleMesh::new(
        vec![
            Point3::new(-0.5, -0.5, 0.0),
            Point3::new(0.5, -0.5, 0.0),
            Point3::new(0.5, 0.5, 0.0),
            Point3::new(-0.5, 0.5, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

/// Box centered at the origin with every face split into `n x n` quads
/// (`12 n²` triangles). Faces wind outward. `n = 1` shares the 8 corners.
pub fn cuboid(extents: Vector3<f64>, n: usize) -> TriangleMesh {
    let h = extents / 2.0;
    if n <= 1 {
        let v = vec![
            Point3::new(-h.x, -h.y, -h.z),
            Point3::new(h.x, -h.y, -h.z),
            Point3::new(h.x, h.y, -h.z),
            Point3::new(-h.x, h.y, -h.z),
            Point3::new(-h.x, -h.y, h.z),
            Point3::new(h.x, -h.y, h.z),
            Point3::new(h.x, h.y, h.z),
            Point3::new(-h.x, h.y, h.z),
        ];
        let f = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        return TriangleMesh::new(v, f).unwrap();
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    // (normal axis, sign): each face is a grid over the two other axes,
    // ordered so that (u × v) points along the outward normal.
    for (axis, sign) in [(0usize, 1.0f64), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)] {
        let (mut ua, mut va) = ((axis + 1) % 3, (axis + 2) % 3);
        if sign < 0.0 {
            std::mem::swap(&mut ua, &mut va);
        }
        let base = vertices.len() as u32;
        for j in 0..=n {
            for i in 0..=n {
                let mut p = Point3::origin();
                p[axis] = sign * h[axis];
                p[ua] = -h[ua] + extents[ua] * i as f64 / n as f64;
                p[va] = -h[va] + extents[va] * j as f64 / n as f64;
                vertices.push(p);
            }
        }
        let row = (n + 1) as u32;
        for j in 0..n as u32 {
            for i in 0..n as u32 {
                let a = base + j * row + i;
                faces.push([a, a + 1, a + row + 1]);
                faces.push([a, a + row + 1, a + row]);
            }
        }
    }
    TriangleMesh::new(vertices, faces).unwrap()
}

/// Latitude/longitude sphere with vertices on the true sphere, including
/// both poles.
pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
    let stacks = stacks.max(2);
    let slices = slices.max(3);
    let mut v = vec![Point3::new(0.0, 0.0, radius)];
    for s in 1..stacks {
        let phi = PI * s as f64 / stacks as f64;
        for k in 0..slices {
            let th = 2.0 * PI * k as f64 / slices as f64;
            v.push(Point3::new(radius * phi.sin() * th.cos(), radius * phi.sin() * th.sin(), radius * phi.cos()));
        }
    }
    v.push(Point3::new(0.0, 0.0, -radius));
    let south = (v.len() - 1) as u32;
    let ring = |s: usize, k: usize| (1 + (s - 1) * slices + k % slices) as u32;
    let mut f = Vec::new();
    for k in 0..slices {
        f.push([0, ring(1, k), ring(1, k + 1)]);
    }
    for s in 1..stacks - 1 {
        for k in 0..slices {
            let (a, b, c, d) = (ring(s, k), ring(s, k + 1), ring(s + 1, k), ring(s + 1, k + 1));
            f.push([a, c, d]);
            f.push([a, d, b]);
        }
    }
    for k in 0..slices {
        f.push([south, ring(stacks - 1, k + 1), ring(stacks - 1, k)]);
    }
    TriangleMesh::new(v, f).unwrap()
}

/// Extrudes a simple counter-clockwise polygon in the XY plane along z,
/// centered on z = 0. Caps are ear-clipped so concave outlines work.
pub fn extrude(outline: &[Point2<f64>], depth: f64) -> TriangleMesh {
    let n = outline.len();
    let hz = depth / 2.0;
    let mut v: Vec<Point3<f64>> = outline.iter().map(|p| Point3::new(p.x, p.y, -hz)).collect();
    v.extend(outline.iter().map(|p| Point3::new(p.x, p.y, hz)));
    let mut f = Vec::new();
    for [a, b, c] in ear_clip(outline) {
        f.push([a, c, b]);
        f.push([a + n as u32, b + n as u32, c + n as u32]);
    }
    for i in 0..n as u32 {
        let j = (i + 1) % n as u32;
        f.push([i, j, j + n as u32]);
        f.push([i, j + n as u32, i + n as u32]);
    }
    TriangleMesh::new(v, f).unwrap()
}

fn ear_clip(poly: &[Point2<f64>]) -> Vec<[u32; 3]> {
    let cross = |o: Point2<f64>, a: Point2<f64>, b: Point2<f64>| (a - o).perp(&(b - o));
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::new();
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&k| {
            let (a, b, c) = (poly[idx[(k + m - 1) % m]], poly[idx[k]], poly[idx[(k + 1) % m]]);
            if cross(a, b, c) <= 0.0 {
                return false;
            }
            idx.iter().all(|&o| {
                let p = poly[o];
                p == a || p == b || p == c || !(cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0)
            })
        });
        let k = ear.expect("outline must be a simple counter-clockwise polygon");
        out.push([idx[(k + m - 1) % m] as u32, idx[k] as u32, idx[(k + 1) % m] as u32]);
        idx.remove(k);
    }
    out.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
    out
}

/// Subdivides every triangle into four, `levels` times. Geometry is unchanged.
pub fn subdivide(mesh: &TriangleMesh, levels: usize) -> TriangleMesh {
    let mut cur = mesh.clone();
    for _ in 0..levels {
        let mut v = cur.vertices().to_vec();
        let mut f = Vec::with_capacity(cur.faces().len() * 4);
        let mut mids = std::collections::HashMap::new();
        let mut mid = |a: u32, b: u32, v: &mut Vec<Point3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mids.entry(key).or_insert_with(|| {
                v.push(nalgebra::center(&v[a as usize], &v[b as usize]));
                (v.len() - 1) as u32
            })
        };
        for &[a, b, c] in cur.faces() {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            f.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        cur = TriangleMesh::new(v, f).unwrap();
    }
    cur
}

/// Serializes a mesh as OBJ text.
pub fn to_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

/// L-shaped bracket profile with unequal arms.
pub fn bracket_mesh() -> TriangleMesh {
    let outline = [
        Point2::new(0.0, 0.0),
        Point2::new(0.16, 0.0),
        Point2::new(0.16, 0.03),
        Point2::new(0.03, 0.03),
        Point2::new(0.03, 0.09),
        Point2::new(0.0, 0.09),
    ];
    extrude(&outline, 0.06)
}

/// Right-triangle prism with unequal legs and a step on the long leg.
pub fn wedge_mesh() -> TriangleMesh {
    let outline = [
        Point2::new(0.0, 0.0),
        Point2::new(0.15, 0.0),
        Point2::new(0.15, 0.02),
        Point2::new(0.04, 0.07),
        Point2::new(0.0, 0.07),
    ];
    extrude(&outline, 0.05)
}

/// Fixture categories whose shapes have no proper rotational symmetry.
pub const ASYMMETRIC_CATEGORIES: [&str; 3] = ["bracket", "wedge", "gadget"];

/// Builds instance `variant` (0 or 1, or any index) of a fixture category.
///
/// Variant 0 is the reference shape; other variants are uniformly rescaled
/// and re-tessellated, so they share the canonical shape but not the mesh.
pub fn fixture_model(category: &str, variant: usize) -> ModelAsset {
    let scale = 1.0 + 0.25 * variant as f64;
    let levels = variant.min(2);
    let id = format!("{category}_{variant:02}");
    let part = |mesh: TriangleMesh, pose: Se3Pose| {
        PartAsset::new(subdivide(&mesh, levels).shifted_scaled(&Vector3::zeros(), scale), scale_pose(&pose, scale))
    };
    let parts = match category {
        "bracket" => vec![part(bracket_mesh(), Se3Pose::identity())],
        "wedge" => vec![part(wedge_mesh(), Se3Pose::identity())],
        "gadget" => vec![
            part(cuboid(Vector3::new(0.14, 0.06, 0.03), 1), Se3Pose::identity()),
            part(
                cuboid(Vector3::new(0.03, 0.03, 0.08), 1),
                Se3Pose::from_translation(Vector3::new(0.045, 0.015, 0.055)),
            ),
            part(
                cuboid(Vector3::new(0.02, 0.05, 0.02), 1),
                Se3Pose::from_translation(Vector3::new(-0.06, 0.0, 0.025)),
            ),
        ],
        "cube" => vec![part(cuboid(Vector3::new(0.1, 0.1, 0.1), 1), Se3Pose::identity())],
        "ball" => vec![part(uv_sphere(0.06, 16, 32), Se3Pose::identity())],
        other => panic!("unknown fixture category `{other}`"),
    };
    ModelAsset::new(category, id, parts).unwrap()
}

fn scale_pose(p: &Se3Pose, s: f64) -> Se3Pose {
    Se3Pose::new(p.rotation(), p.translation() * s)
}

/// A finely tessellated cuboid (10 092 triangles) for performance work.
pub fn dense_mesh() -> TriangleMesh {
    cuboid(Vector3::new(0.14, 0.06, 0.1), 29)
}
