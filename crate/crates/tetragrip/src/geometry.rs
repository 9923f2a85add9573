//! Vectors, rotations, triangle meshes, and a bounding-volume-hierarchy
//! raycaster.
//!
//! All distances are meters and all types are `f64`. The BVH is immutable
//! after construction and safe to share across threads for reads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Determinant threshold below which a ray is treated as parallel to a
/// triangle's plane.
pub const DET_EPSILON: f64 = 1e-12;

/// Triangles with less area than this are rejected at mesh construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

const BVH_LEAF_SIZE: usize = 4;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("vertex {0} is not finite")]
    NonFiniteVertex(usize),
    #[error("triangle {triangle} references vertex {index} out of range {len}")]
    IndexOutOfRange { triangle: usize, index: u32, len: usize },
    #[error("triangle {0} is degenerate (area below {MIN_TRIANGLE_AREA})")]
    DegenerateTriangle(usize),
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("ray range [{t_min}, {t_max}] is invalid")]
    InvalidRange { t_min: f64, t_max: f64 },
    #[error("rotation axis has zero length")]
    ZeroAxis,
    #[error("cannot build a BVH from zero triangles")]
    EmptyBvh,
    #[error("OBJ parse error at line {line}: {message}")]
    ObjParse { line: usize, message: String },
}

// ---------- Vec3 ----------

/// A 3D vector or point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn length(self) -> f64 {
        self.length_squared().sqrt()
    }

    /// Unit vector, or an error for the zero vector.
    pub fn normalized(self) -> Result<Vec3, GeometryError> {
        let len = self.length();
        if len <= 0.0 || !len.is_finite() {
            return Err(GeometryError::ZeroDirection);
        }
        Ok(self * (1.0 / len))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min_by_component(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_by_component(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

// ---------- Quat ----------

/// Unit quaternion. Constructors normalize; deserialized values should be
/// checked with [`Quat::is_normalized`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Result<Quat, GeometryError> {
        let axis = axis.normalized().map_err(|_| GeometryError::ZeroAxis)?;
        let (s, c) = (angle_rad * 0.5).sin_cos();
        Ok(Quat { w: c, x: axis.x * s, y: axis.y * s, z: axis.z * s })
    }

    /// Yaw about the world vertical (+z) axis.
    pub fn from_yaw(angle_rad: f64) -> Quat {
        let (s, c) = (angle_rad * 0.5).sin_cos();
        Quat { w: c, x: 0.0, y: 0.0, z: s }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_normalized(self) -> bool {
        (self.norm() - 1.0).abs() < 1e-9
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // q v q* expanded: v + 2 u x (u x v + w v), u = (x, y, z).
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Composition: `(a * b).rotate(v) == a.rotate(b.rotate(v))`.
    pub fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotation angle about +z implied by this quaternion, assuming a pure
    /// yaw. Used by the quasi-static push model, which only yaws objects.
    pub fn yaw_angle(self) -> f64 {
        2.0 * self.z.atan2(self.w)
    }
}

// ---------- Pose ----------

/// Rigid transform mapping local coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rotation: Quat::IDENTITY, translation: Vec3::ZERO };

    pub fn new(rotation: Quat, translation: Vec3) -> Pose {
        Pose { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Pose {
        Pose { rotation: Quat::IDENTITY, translation }
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// `a.compose(&b)` maps local through `b` first, then `a`.
    pub fn compose(&self, o: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.mul(o.rotation).normalized(),
            translation: self.apply_point(o.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.conjugate();
        Pose { rotation: inv_rot, translation: -inv_rot.rotate(self.translation) }
    }
}

// ---------- TriangleMesh ----------

/// Indexed triangle mesh in a local frame. Construction validates finiteness,
/// index bounds, and non-degeneracy of every triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(GeometryError::NonFiniteVertex(i));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &idx in tri {
                if idx as usize >= vertices.len() {
                    return Err(GeometryError::IndexOutOfRange {
                        triangle: t,
                        index: idx,
                        len: vertices.len(),
                    });
                }
            }
            let [a, b, c] = *tri;
            let (va, vb, vc) =
                (vertices[a as usize], vertices[b as usize], vertices[c as usize]);
            let area = (vb - va).cross(vc - va).length() * 0.5;
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(GeometryError::DegenerateTriangle(t));
            }
        }
        Ok(TriangleMesh { vertices, triangles })
    }

    /// Axis-aligned box centered on the local origin, outward winding.
    pub fn axis_aligned_box(half: Vec3) -> Self {
        let (hx, hy, hz) = (half.x, half.y, half.z);
        let v = vec![
            Vec3::new(-hx, -hy, -hz),
            Vec3::new(hx, -hy, -hz),
            Vec3::new(hx, hy, -hz),
            Vec3::new(-hx, hy, -hz),
            Vec3::new(-hx, -hy, hz),
            Vec3::new(hx, -hy, hz),
            Vec3::new(hx, hy, hz),
            Vec3::new(-hx, hy, hz),
        ];
        let quads: [[u32; 4]; 6] = [
            [0, 3, 2, 1], // -z
            [4, 5, 6, 7], // +z
            [0, 1, 5, 4], // -y
            [2, 3, 7, 6], // +y
            [0, 4, 7, 3], // -x
            [1, 2, 6, 5], // +x
        ];
        let mut tris = Vec::with_capacity(12);
        for q in quads {
            tris.push([q[0], q[1], q[2]]);
            tris.push([q[0], q[2], q[3]]);
        }
        TriangleMesh::new(v, tris).expect("box mesh is valid by construction")
    }

    /// Rectangle in the local y-z plane with geometric normal -x. Used as a
    /// flat contact patch for sensor and seal tests.
    pub fn rectangle_facing_neg_x(half_y: f64, half_z: f64) -> Self {
        let v = vec![
            Vec3::new(0.0, -half_y, -half_z),
            Vec3::new(0.0, half_y, -half_z),
            Vec3::new(0.0, half_y, half_z),
            Vec3::new(0.0, -half_y, half_z),
        ];
        let tris = vec![[0, 2, 1], [0, 3, 2]];
        TriangleMesh::new(v, tris).expect("rectangle mesh is valid by construction")
    }

    /// Concatenates several meshes into one, remapping indices.
    pub fn merged(parts: &[TriangleMesh]) -> Result<Self, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for part in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&part.vertices);
            for tri in &part.triangles {
                triangles.push([tri[0] + base, tri[1] + base, tri[2] + base]);
            }
        }
        TriangleMesh::new(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle_vertices(&self, tri: usize) -> (Vec3, Vec3, Vec3) {
        let [a, b, c] = self.triangles[tri];
        (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize])
    }

    /// Mean of the raw vertex positions.
    pub fn vertex_centroid(&self) -> Vec3 {
        let mut sum = Vec3::ZERO;
        for v in &self.vertices {
            sum = sum + *v;
        }
        sum * (1.0 / self.vertices.len() as f64)
    }

    /// Parses a minimal ASCII OBJ: `v x y z` vertices and triangular `f`
    /// faces with positive 1-based indices. Texture/normal suffixes after
    /// `/` are ignored; all other directives are skipped.
    pub fn parse_obj(text: &str) -> Result<Self, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let mut toks = raw.split_whitespace();
            match toks.next() {
                Some("v") => {
                    let mut coords = [0.0f64; 3];
                    for c in coords.iter_mut() {
                        let tok = toks.next().ok_or_else(|| GeometryError::ObjParse {
                            line,
                            message: "vertex needs 3 coordinates".into(),
                        })?;
                        *c = tok.parse().map_err(|_| GeometryError::ObjParse {
                            line,
                            message: format!("bad coordinate {tok:?}"),
                        })?;
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<&str> = toks.collect();
                    if idx.len() != 3 {
                        return Err(GeometryError::ObjParse {
                            line,
                            message: format!("face has {} vertices, only triangles are supported", idx.len()),
                        });
                    }
                    let mut tri = [0u32; 3];
                    for (slot, tok) in tri.iter_mut().zip(&idx) {
                        let head = tok.split('/').next().unwrap_or("");
                        let parsed: i64 = head.parse().map_err(|_| GeometryError::ObjParse {
                            line,
                            message: format!("bad face index {tok:?}"),
                        })?;
                        if parsed < 1 {
                            return Err(GeometryError::ObjParse {
                                line,
                                message: format!("face index {parsed} must be positive"),
                            });
                        }
                        *slot = (parsed - 1) as u32;
                    }
                    triangles.push(tri);
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Writes the mesh as ASCII OBJ with 1-based indices.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }
}

/// Applies a rigid transform to every vertex, producing a new mesh.
pub fn transform_mesh(mesh: &TriangleMesh, pose: &Pose) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| pose.apply_point(*v)).collect(),
        triangles: mesh.triangles.clone(),
    }
}

// ---------- Ray ----------

/// Ray with a unit direction and a parametric validity range.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_min: f64, t_max: f64) -> Result<Ray, GeometryError> {
        let direction = direction.normalized()?;
        if !(t_min >= 0.0 && t_max > t_min && t_max.is_finite()) {
            return Err(GeometryError::InvalidRange { t_min, t_max });
        }
        if !origin.is_finite() {
            return Err(GeometryError::NonFiniteVertex(0));
        }
        Ok(Ray { origin, direction, t_min, t_max })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Nearest-hit record. `normal` is the unit geometric normal of the triangle
/// (right-hand winding), not flipped toward the ray: back-face hits keep the
/// outward normal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RayHit {
    pub t: f64,
    pub object_id: u32,
    pub triangle_id: u32,
    pub point: Vec3,
    pub normal: Vec3,
}

/// Moller-Trumbore with inclusive barycentric bounds so rays through shared
/// edges and vertices register on at least one adjacent triangle. Back-face
/// hits count. Returns the ray parameter `t`.
pub fn ray_triangle_intersect(ray: &Ray, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let pvec = ray.direction.cross(e2);
    let det = e1.dot(pvec);
    if det.abs() < DET_EPSILON {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - v0;
    let u = tvec.dot(pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = ray.direction.dot(qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(qvec) * inv_det;
    if t < ray.t_min || t > ray.t_max {
        return None;
    }
    Some(t)
}

// ---------- Bvh ----------

#[derive(Debug, Clone)]
struct BvhTri {
    v0: Vec3,
    v1: Vec3,
    v2: Vec3,
    object_id: u32,
    triangle_id: u32,
}

#[derive(Debug, Clone)]
struct BvhNode {
    min: Vec3,
    max: Vec3,
    // Leaf: index of the first triangle and count > 0.
    // Internal: index of the left child (right = left + 1) and count == 0.
    left_first: u32,
    count: u32,
}

/// Static bounding-volume hierarchy over world-space triangles from one or
/// more objects. Median split on the longest centroid axis. Immutable after
/// construction; reads are lock-free and thread-safe.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    tris: Vec<BvhTri>,
}

/// Builds a BVH over `(object_id, world-space mesh)` pairs.
pub fn build_bvh(objects: &[(u32, &TriangleMesh)]) -> Result<Bvh, GeometryError> {
    let mut tris = Vec::new();
    for (object_id, mesh) in objects {
        for (tri_id, _) in mesh.triangles().iter().enumerate() {
            let (v0, v1, v2) = mesh.triangle_vertices(tri_id);
            tris.push(BvhTri { v0, v1, v2, object_id: *object_id, triangle_id: tri_id as u32 });
        }
    }
    if tris.is_empty() {
        return Err(GeometryError::EmptyBvh);
    }
    let mut bvh = Bvh { nodes: Vec::with_capacity(tris.len() * 2), tris };
    let count = bvh.tris.len();
    bvh.nodes.push(BvhNode { min: Vec3::ZERO, max: Vec3::ZERO, left_first: 0, count: count as u32 });
    bvh.update_bounds(0, 0, count);
    bvh.subdivide(0, 0, count);
    Ok(bvh)
}

impl Bvh {
    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    fn update_bounds(&mut self, node: usize, first: usize, count: usize) {
        let mut min = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = -min;
        for tri in &self.tris[first..first + count] {
            for v in [tri.v0, tri.v1, tri.v2] {
                min = min.min_by_component(v);
                max = max.max_by_component(v);
            }
        }
        self.nodes[node].min = min;
        self.nodes[node].max = max;
    }

    fn subdivide(&mut self, node: usize, first: usize, count: usize) {
        if count <= BVH_LEAF_SIZE {
            self.nodes[node].left_first = first as u32;
            self.nodes[node].count = count as u32;
            return;
        }
        // Median split on the longest axis of the centroid bounds. Sorting by
        // (key, object_id, triangle_id) keeps the partition deterministic.
        let centroid = |t: &BvhTri| (t.v0 + t.v1 + t.v2) * (1.0 / 3.0);
        let mut cmin = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut cmax = -cmin;
        for tri in &self.tris[first..first + count] {
            let c = centroid(tri);
            cmin = cmin.min_by_component(c);
            cmax = cmax.max_by_component(c);
        }
        let extent = cmax - cmin;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        if extent.component(axis) <= 0.0 {
            self.nodes[node].left_first = first as u32;
            self.nodes[node].count = count as u32;
            return;
        }
        self.tris[first..first + count].sort_unstable_by(|a, b| {
            let ka = centroid(a).component(axis);
            let kb = centroid(b).component(axis);
            ka.partial_cmp(&kb)
                .unwrap()
                .then(a.object_id.cmp(&b.object_id))
                .then(a.triangle_id.cmp(&b.triangle_id))
        });
        let half = count / 2;
        let left = self.nodes.len();
        self.nodes.push(BvhNode { min: Vec3::ZERO, max: Vec3::ZERO, left_first: 0, count: 0 });
        self.nodes.push(BvhNode { min: Vec3::ZERO, max: Vec3::ZERO, left_first: 0, count: 0 });
        self.nodes[node].left_first = left as u32;
        self.nodes[node].count = 0;
        self.update_bounds(left, first, half);
        self.update_bounds(left + 1, first + half, count - half);
        self.subdivide(left, first, half);
        self.subdivide(left + 1, first + half, count - half);
    }

    fn aabb_hit(node: &BvhNode, ray: &Ray, t_best: f64) -> bool {
        let mut t0 = ray.t_min;
        let mut t1 = t_best;
        for axis in 0..3 {
            let o = ray.origin.component(axis);
            let d = ray.direction.component(axis);
            let lo = node.min.component(axis);
            let hi = node.max.component(axis);
            if d.abs() < 1e-300 {
                if o < lo || o > hi {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (near, far) = if inv >= 0.0 { (lo, hi) } else { (hi, lo) };
            t0 = t0.max((near - o) * inv);
            t1 = t1.min((far - o) * inv);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    /// Nearest hit along the ray, or `None`. Exact ties on `t` are broken by
    /// the lowest `(object_id, triangle_id)`.
    pub fn raycast(&self, ray: &Ray) -> Option<RayHit> {
        let mut best: Option<(f64, u32, u32)> = None;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            let t_best = best.map(|(t, _, _)| t).unwrap_or(ray.t_max);
            if !Self::aabb_hit(node, ray, t_best) {
                continue;
            }
            if node.count > 0 {
                let first = node.left_first as usize;
                for tri in &self.tris[first..first + node.count as usize] {
                    if let Some(t) = ray_triangle_intersect(ray, tri.v0, tri.v1, tri.v2) {
                        let cand = (t, tri.object_id, tri.triangle_id);
                        let better = match best {
                            None => true,
                            Some(b) => cand.0 < b.0 || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2)),
                        };
                        if better {
                            best = Some(cand);
                        }
                    }
                }
            } else {
                // Push the farther child first so the near child pops first.
                let left = node.left_first as usize;
                let order = if ray.direction.component(longest_axis_hint(node)) >= 0.0 {
                    [left + 1, left]
                } else {
                    [left, left + 1]
                };
                for child in order {
                    stack[sp] = child as u32;
                    sp += 1;
                }
            }
        }
        best.map(|(t, object_id, triangle_id)| {
            let tri = self
                .tris
                .iter()
                .find(|x| x.object_id == object_id && x.triangle_id == triangle_id)
                .expect("hit refers to a stored triangle");
            let normal = (tri.v1 - tri.v0)
                .cross(tri.v2 - tri.v0)
                .normalized()
                .expect("mesh triangles are non-degenerate");
            RayHit { t, object_id, triangle_id, point: ray.at(t), normal }
        })
    }
}

fn longest_axis_hint(node: &BvhNode) -> usize {
    let e = node.max - node.min;
    if e.x >= e.y && e.x >= e.z {
        0
    } else if e.y >= e.z {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ray(origin: Vec3, dir: Vec3) -> Ray {
        Ray::new(origin, dir, 0.0, 1.0e3).unwrap()
    }

    // -- Vector and pose algebra --

    #[test]
    fn cross_follows_right_hand_rule() {
        let c = Vec3::new(1.0, 0.0, 0.0).cross(Vec3::new(0.0, 1.0, 0.0));
        assert_abs_diff_eq!(c.z, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn quat_rotates_x_to_y_about_z() {
        let q = Quat::from_yaw(std::f64::consts::FRAC_PI_2);
        let v = q.rotate(Vec3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.yaw_angle(), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn quat_composition_matches_sequential_rotation() {
        let a = Quat::from_axis_angle(Vec3::new(0.3, -1.0, 0.4), 0.7).unwrap();
        let b = Quat::from_axis_angle(Vec3::new(1.0, 0.2, -0.5), -1.3).unwrap();
        let v = Vec3::new(0.2, -0.7, 1.1);
        let lhs = a.mul(b).rotate(v);
        let rhs = a.rotate(b.rotate(v));
        assert_abs_diff_eq!((lhs - rhs).length(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pose_inverse_roundtrips_points() {
        let pose = Pose::new(
            Quat::from_axis_angle(Vec3::new(0.1, 0.9, -0.3), 2.1).unwrap(),
            Vec3::new(0.4, -1.2, 3.3),
        );
        let p = Vec3::new(-0.7, 0.2, 0.9);
        let back = pose.inverse().apply_point(pose.apply_point(p));
        assert_abs_diff_eq!((back - p).length(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_axis_rotation_is_rejected() {
        assert!(Quat::from_axis_angle(Vec3::ZERO, 1.0).is_err());
    }

    // -- Mesh validation --

    #[test]
    fn mesh_rejects_non_finite_vertex() {
        let verts = vec![Vec3::new(f64::NAN, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert!(matches!(
            TriangleMesh::new(verts, vec![[0, 1, 2]]),
            Err(GeometryError::NonFiniteVertex(0))
        ));
    }

    #[test]
    fn mesh_rejects_out_of_range_index() {
        let verts = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert!(matches!(
            TriangleMesh::new(verts, vec![[0, 1, 7]]),
            Err(GeometryError::IndexOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn mesh_rejects_degenerate_triangle() {
        let verts = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(matches!(
            TriangleMesh::new(verts, vec![[0, 1, 2]]),
            Err(GeometryError::DegenerateTriangle(0))
        ));
    }

    #[test]
    fn box_mesh_has_outward_normals() {
        let mesh = TriangleMesh::axis_aligned_box(Vec3::new(0.5, 0.4, 0.3));
        assert_eq!(mesh.triangles().len(), 12);
        assert_eq!(mesh.vertices().len(), 8);
        for t in 0..12 {
            let (a, b, c) = mesh.triangle_vertices(t);
            let n = (b - a).cross(c - a);
            let face_centroid = (a + b + c) * (1.0 / 3.0);
            assert!(n.dot(face_centroid) > 0.0, "triangle {t} winds inward");
        }
    }

    // -- OBJ ingestion --

    #[test]
    fn obj_roundtrip_preserves_cube() {
        let cube = TriangleMesh::axis_aligned_box(Vec3::new(0.5, 0.5, 0.5));
        let text = cube.to_obj();
        let parsed = TriangleMesh::parse_obj(&text).unwrap();
        assert_eq!(parsed.vertices().len(), 8);
        assert_eq!(parsed.triangles().len(), 12);
        assert_eq!(parsed.triangles(), cube.triangles());
    }

    #[test]
    fn obj_ignores_comments_and_slash_suffixes() {
        let text = "# cube corner\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1\n";
        let mesh = TriangleMesh::parse_obj(text).unwrap();
        assert_eq!(mesh.triangles().len(), 1);
    }

    #[test]
    fn obj_rejects_non_integer_index() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n";
        assert!(matches!(
            TriangleMesh::parse_obj(text),
            Err(GeometryError::ObjParse { line: 4, .. })
        ));
    }

    #[test]
    fn obj_rejects_quad_faces() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(TriangleMesh::parse_obj(text).is_err());
    }

    // -- Ray-triangle --

    #[test]
    fn ray_validation_rejects_zero_direction_and_bad_range() {
        assert!(Ray::new(Vec3::ZERO, Vec3::ZERO, 0.0, 1.0).is_err());
        assert!(Ray::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), 1.0, 0.5).is_err());
        assert!(Ray::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), -0.1, 0.5).is_err());
    }

    #[test]
    fn cube_front_face_hit_distance_is_closed_form() {
        let cube = TriangleMesh::axis_aligned_box(Vec3::new(0.5, 0.5, 0.5));
        let bvh = build_bvh(&[(7, &cube)]).unwrap();
        let hit = bvh.raycast(&ray(Vec3::new(0.0, 0.0, -1.5), Vec3::new(0.0, 0.0, 1.0))).unwrap();
        assert_abs_diff_eq!(hit.t, 1.0, epsilon = 1e-12);
        assert_eq!(hit.object_id, 7);
        assert_abs_diff_eq!(hit.normal.z, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn interior_origin_hits_back_face() {
        let cube = TriangleMesh::axis_aligned_box(Vec3::new(0.5, 0.5, 0.5));
        let bvh = build_bvh(&[(0, &cube)]).unwrap();
        let hit = bvh.raycast(&ray(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0))).unwrap();
        assert_abs_diff_eq!(hit.t, 0.5, epsilon = 1e-12);
        // Geometric normal of the +z face still points outward.
        assert_abs_diff_eq!(hit.normal.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn t_min_skips_near_faces() {
        let cube = TriangleMesh::axis_aligned_box(Vec3::new(0.5, 0.5, 0.5));
        let bvh = build_bvh(&[(0, &cube)]).unwrap();
        let r = Ray::new(Vec3::new(0.0, 0.0, -1.5), Vec3::new(0.0, 0.0, 1.0), 1.2, 1.0e3).unwrap();
        let hit = bvh.raycast(&r).unwrap();
        assert_abs_diff_eq!(hit.t, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn t_max_excludes_far_hits() {
        let cube = TriangleMesh::axis_aligned_box(Vec3::new(0.5, 0.5, 0.5));
        let bvh = build_bvh(&[(0, &cube)]).unwrap();
        let r = Ray::new(Vec3::new(0.0, 0.0, -1.5), Vec3::new(0.0, 0.0, 1.0), 0.0, 0.9).unwrap();
        assert!(bvh.raycast(&r).is_none());
    }

    #[test]
    fn equal_t_tie_breaks_to_lowest_ids() {
        let tri = TriangleMesh::new(
            vec![Vec3::new(-1.0, -1.0, 1.0), Vec3::new(1.0, -1.0, 1.0), Vec3::new(0.0, 1.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        // Identical geometry registered as two objects: both hit at the same t.
        let bvh = build_bvh(&[(3, &tri), (1, &tri)]).unwrap();
        let hit = bvh.raycast(&ray(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0))).unwrap();
        assert_eq!(hit.object_id, 1);

        // Duplicate triangle inside one mesh: lowest triangle_id wins.
        let dup = TriangleMesh::new(
            tri.vertices().to_vec(),
            vec![[0, 1, 2], [0, 1, 2]],
        )
        .unwrap();
        let bvh = build_bvh(&[(0, &dup)]).unwrap();
        let hit = bvh.raycast(&ray(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0))).unwrap();
        assert_eq!(hit.triangle_id, 0);
    }

    #[test]
    fn shared_edge_and_vertex_report_exactly_one_hit() {
        // Unit quad split along the diagonal from (0,0) to (1,1) at z = 1.
        let quad = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(1.0, 0.0, 1.0),
                Vec3::new(1.0, 1.0, 1.0),
                Vec3::new(0.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let bvh = build_bvh(&[(0, &quad)]).unwrap();
        // Through the diagonal midpoint.
        let hit = bvh.raycast(&ray(Vec3::new(0.5, 0.5, 0.0), Vec3::new(0.0, 0.0, 1.0))).unwrap();
        assert_abs_diff_eq!(hit.t, 1.0, epsilon = 1e-12);
        // Through the shared vertex.
        let hit = bvh.raycast(&ray(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0))).unwrap();
        assert_abs_diff_eq!(hit.t, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_bvh_is_an_error() {
        assert!(matches!(build_bvh(&[]), Err(GeometryError::EmptyBvh)));
    }

    #[test]
    fn bvh_is_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Bvh>();
    }

    #[test]
    fn transform_mesh_maps_vertices_exactly() {
        let mesh = TriangleMesh::axis_aligned_box(Vec3::new(0.1, 0.2, 0.3));
        let pose = Pose::new(Quat::from_yaw(0.4), Vec3::new(1.0, -2.0, 0.5));
        let moved = transform_mesh(&mesh, &pose);
        for (a, b) in mesh.vertices().iter().zip(moved.vertices()) {
            assert_abs_diff_eq!((pose.apply_point(*a) - *b).length(), 0.0, epsilon = 1e-15);
        }
        assert_eq!(mesh.triangles(), moved.triangles());
    }

    // -- Brute-force oracle --

    /// Independent intersector: plane hit followed by a same-side test.
    /// Shares no code with the Moller-Trumbore path.
    fn oracle_intersect(ray: &Ray, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<f64> {
        let n = (v1 - v0).cross(v2 - v0);
        let denom = n.dot(ray.direction);
        if denom.abs() < DET_EPSILON * n.length() {
            return None;
        }
        let t = n.dot(v0 - ray.origin) / denom;
        if t < ray.t_min || t > ray.t_max {
            return None;
        }
        let p = ray.at(t);
        let c0 = (v1 - v0).cross(p - v0).dot(n);
        let c1 = (v2 - v1).cross(p - v1).dot(n);
        let c2 = (v0 - v2).cross(p - v2).dot(n);
        let scale = n.length_squared();
        let eps = -1e-12 * scale;
        if c0 >= eps && c1 >= eps && c2 >= eps {
            Some(t)
        } else {
            None
        }
    }

    fn brute_force_raycast(meshes: &[(u32, &TriangleMesh)], ray: &Ray) -> Option<(f64, u32, u32)> {
        let mut best: Option<(f64, u32, u32)> = None;
        for (object_id, mesh) in meshes {
            for tri_id in 0..mesh.triangles().len() {
                let (v0, v1, v2) = mesh.triangle_vertices(tri_id);
                if let Some(t) = oracle_intersect(ray, v0, v1, v2) {
                    let cand = (t, *object_id, tri_id as u32);
                    let better = match best {
                        None => true,
                        Some(b) => cand.0 < b.0 - 1e-9
                            || ((cand.0 - b.0).abs() <= 1e-9 && (cand.1, cand.2) < (b.1, b.2)),
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
        best
    }

    fn random_soup(rng: &mut ChaCha8Rng, tris: usize) -> TriangleMesh {
        loop {
            let mut verts = Vec::new();
            for _ in 0..tris * 3 {
                verts.push(Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ));
            }
            let triangles = (0..tris).map(|i| [(3 * i) as u32, (3 * i + 1) as u32, (3 * i + 2) as u32]).collect();
            if let Ok(mesh) = TriangleMesh::new(verts, triangles) {
                return mesh;
            }
        }
    }

    #[test]
    fn bvh_matches_brute_force_on_random_soups() {
        let mut rng = ChaCha8Rng::seed_from_u64(20240811);
        for scene in 0..5 {
            let mesh_a = random_soup(&mut rng, 120);
            let mesh_b = random_soup(&mut rng, 80);
            let meshes = [(0u32, &mesh_a), (1u32, &mesh_b)];
            let bvh = build_bvh(&meshes).unwrap();
            for cast in 0..400 {
                let origin = Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                );
                let dir = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if dir.length() < 1e-3 {
                    continue;
                }
                let r = Ray::new(origin, dir, 0.0, 10.0).unwrap();
                let fast = bvh.raycast(&r).map(|h| (h.t, h.object_id, h.triangle_id));
                let slow = brute_force_raycast(&meshes, &r);
                match (fast, slow) {
                    (None, None) => {}
                    (Some(f), Some(s)) => {
                        assert!(
                            (f.0 - s.0).abs() < 1e-9,
                            "scene {scene} cast {cast}: t mismatch {f:?} vs {s:?}"
                        );
                    }
                    other => panic!("scene {scene} cast {cast}: hit disagreement {other:?}"),
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn moller_trumbore_agrees_with_plane_barycentric_oracle(
            seed in 0u64..u64::MAX,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = |rng: &mut ChaCha8Rng| Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let (v0, v1, v2) = (v(&mut rng), v(&mut rng), v(&mut rng));
            let area2 = (v1 - v0).cross(v2 - v0).length();
            prop_assume!(area2 > 1e-6);
            let origin = v(&mut rng) * 2.0;
            let dir = v(&mut rng);
            prop_assume!(dir.length() > 1e-3);
            let ray = Ray::new(origin, dir, 0.0, 20.0).unwrap();
            let fast = ray_triangle_intersect(&ray, v0, v1, v2);
            let slow = oracle_intersect(&ray, v0, v1, v2);
            match (fast, slow) {
                (None, None) => {}
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                // Disagreement is only acceptable within a hair of the
                // triangle boundary; re-test with a nudged ray.
                (fa, sl) => {
                    let p = ray.at(fa.or(sl).unwrap());
                    let d0 = (v1 - v0).cross(p - v0).dot((v1 - v0).cross(v2 - v0));
                    let d1 = (v2 - v1).cross(p - v1).dot((v1 - v0).cross(v2 - v0));
                    let d2 = (v0 - v2).cross(p - v2).dot((v1 - v0).cross(v2 - v0));
                    let margin = d0.min(d1).min(d2).abs();
                    prop_assert!(margin < 1e-7 * area2 * area2.max(1.0),
                        "non-boundary disagreement: {fa:?} vs {sl:?}");
                }
            }
        }
    }
}
