//! Bounding volume hierarchy over one triangle mesh.
//!
//! Median split of triangle centroids along the longest axis, at most
//! [`LEAF_SIZE`] triangles per leaf. Nearest-hit queries return exactly what
//! [`brute_force_hit`] returns: same triangle, same parameter. Ties on `t`
//! resolve to the lower triangle index in both paths.

use nalgebra::{Point3, Vector3};

use crate::mesh::{Aabb, TriangleMesh};

pub const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Self {
        Self { origin, dir }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub triangle: u32,
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

impl Hit {
    fn closer_than(&self, other: &Hit) -> bool {
        self.t < other.t || (self.t == other.t && self.triangle < other.triangle)
    }
}

/// Precomputed triangle data for the intersection kernel.
#[derive(Debug, Clone, Copy)]
struct Tri {
    p0: Point3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    normal_len: f64,
}

impl Tri {
    fn new([a, b, c]: [Point3<f64>; 3]) -> Self {
        let e1 = b - a;
        let e2 = c - a;
        Tri { p0: a, e1, e2, normal_len: e1.cross(&e2).norm() }
    }

    /// Two-sided Möller–Trumbore.
    #[inline]
    fn intersect(&self, ray: &Ray, dir_len: f64, id: u32) -> Option<Hit> {
        let pvec = ray.dir.cross(&self.e2);
        let det = self.e1.dot(&pvec);
        if det.abs() <= 1e-14 * self.normal_len * dir_len || self.normal_len == 0.0 {
            return None;
        }
        let inv_det = 1.0 / det;
        let tvec = ray.origin - self.p0;
        let u = tvec.dot(&pvec) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(&self.e1);
        let v = ray.dir.dot(&qvec) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = self.e2.dot(&qvec) * inv_det;
        Some(Hit { triangle: id, t, u, v })
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    min: [f64; 3],
    max: [f64; 3],
    /// Leaf: first index into `order`; interior: index of the left child
    /// (the right child follows the left subtree).
    start: u32,
    count: u32,
    right: u32,
}

/// Acceleration structure for nearest-hit ray queries.
#[derive(Debug, Clone)]
pub struct RayAccel {
    tris: Vec<Tri>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// Nearest hit with `t` in `[t_min, t_max]`, testing every triangle.
pub fn brute_force_hit(mesh: &TriangleMesh, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
    let dir_len = ray.dir.norm();
    let mut best: Option<Hit> = None;
    for i in 0..mesh.faces().len() {
        let tri = Tri::new(mesh.triangle(i));
        if let Some(h) = tri.intersect(ray, dir_len, i as u32) {
            if h.t >= t_min && h.t <= t_max && best.is_none_or(|b| h.closer_than(&b)) {
                best = Some(h);
            }
        }
    }
    best
}

pub fn build_accel(mesh: &TriangleMesh) -> RayAccel {
    RayAccel::new(mesh)
}

impl RayAccel {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let tris: Vec<Tri> = (0..mesh.faces().len()).map(|i| Tri::new(mesh.triangle(i))).collect();
        let bounds: Vec<Aabb> = (0..mesh.faces().len())
            .map(|i| Aabb::from_points(mesh.triangle(i).iter()).unwrap())
            .collect();
        let centroids: Vec<Point3<f64>> = bounds.iter().map(Aabb::center).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        let n = order.len();
        build(&mut nodes, &mut order, 0, n, &bounds, &centroids);
        RayAccel { tris, order, nodes }
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Bounds of the whole mesh (padded).
    pub fn bounds(&self) -> Aabb {
        let r = &self.nodes[0];
        Aabb { min: Point3::from(r.min), max: Point3::from(r.max) }
    }

    /// Nearest hit with `t` in `[t_min, t_max]`.
    pub fn nearest_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let dir_len = ray.dir.norm();
        let inv = Vector3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        slab(&self.nodes[0], ray, &inv, t_min, limit)?;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let ni = stack[sp];
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let s = node.start as usize;
                for &id in &self.order[s..s + node.count as usize] {
                    if let Some(h) = self.tris[id as usize].intersect(ray, dir_len, id) {
                        if h.t >= t_min && h.t <= limit && best.is_none_or(|b| h.closer_than(&b)) {
                            best = Some(h);
                            limit = h.t;
                        }
                    }
                }
                continue;
            }
            let left = ni + 1;
            let right = node.right;
            let hl = slab(&self.nodes[left as usize], ray, &inv, t_min, limit);
            let hr = slab(&self.nodes[right as usize], ray, &inv, t_min, limit);
            match (hl, hr) {
                (Some(a), Some(b)) => {
                    // nearer child is popped first
                    let (near, far) = if a <= b { (left, right) } else { (right, left) };
                    stack[sp] = far;
                    stack[sp + 1] = near;
                    sp += 2;
                }
                (Some(_), None) => {
                    stack[sp] = left;
                    sp += 1;
                }
                (None, Some(_)) => {
                    stack[sp] = right;
                    sp += 1;
                }
                (None, None) => {}
            }
        }
        best
    }
}

/// Entry distance of the ray into the node box, if it overlaps `[t_min, t_max]`.
#[inline]
fn slab(node: &Node, ray: &Ray, inv: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
    let mut lo = t_min;
    let mut hi = t_max;
    for a in 0..3 {
        let o = ray.origin[a];
        if inv[a].is_infinite() {
            if o < node.min[a] || o > node.max[a] {
                return None;
            }
            continue;
        }
        let t1 = (node.min[a] - o) * inv[a];
        let t2 = (node.max[a] - o) * inv[a];
        let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        lo = lo.max(near);
        hi = hi.min(far);
        if lo > hi {
            return None;
        }
    }
    Some(lo)
}

fn build(nodes: &mut Vec<Node>, order: &mut [u32], start: usize, end: usize, bounds: &[Aabb], centroids: &[Point3<f64>]) -> u32 {
    let mut b = Aabb::empty();
    let mut cb = Aabb::empty();
    for &id in &order[start..end] {
        b = b.union(&bounds[id as usize]);
        cb.grow(&centroids[id as usize]);
    }
    // Padding keeps flat boxes (axis-aligned faces) from losing hits to rounding.
    let pad = 1e-9 * (1.0 + b.min.coords.abs().max().max(b.max.coords.abs().max()));
    let idx = nodes.len() as u32;
    nodes.push(Node {
        min: [b.min.x - pad, b.min.y - pad, b.min.z - pad],
        max: [b.max.x + pad, b.max.y + pad, b.max.z + pad],
        start: start as u32,
        count: (end - start) as u32,
        right: 0,
    });
    if end - start <= LEAF_SIZE {
        return idx;
    }
    let axis = cb.longest_axis();
    let mid = start + (end - start) / 2;
    order[start..end].sort_by(|&a, &b| {
        centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b))
    });
    let left = build(nodes, order, start, mid, bounds, centroids);
    debug_assert_eq!(left, idx + 1);
    let right = build(nodes, order, mid, end, bounds, centroids);
    let node = &mut nodes[idx as usize];
    node.count = 0;
    node.right = right;
    idx
}
