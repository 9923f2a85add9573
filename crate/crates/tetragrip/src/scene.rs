//! Bin contents and scenario generation.
//!
//! World frame: `+x` is the approach direction into the bin, `+y` is lateral,
//! `+z` is up. The bin interior occupies `[0, 0.40] x [-0.15, 0.15] x
//! [0, 0.25]` meters and is bounded by five fixed walls (floor, back, two
//! sides, and a lip strip across the top of the opening). The gripper base
//! sits outside the opening on the `-x` side.
//!
//! All movable objects are axis-aligned boxes (optionally compound, for the
//! ledged variant) that may yaw about the vertical axis. Generation is a pure
//! function of the [`ScenarioSpec`], including its seed.

use crate::geometry::{Pose, Quat, TriangleMesh, Vec3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Interior corner of the bin volume nearest the gripper.
pub const BIN_MIN: Vec3 = Vec3 { x: 0.0, y: -0.15, z: 0.0 };
/// Interior corner of the bin volume farthest from the gripper.
pub const BIN_MAX: Vec3 = Vec3 { x: 0.40, y: 0.15, z: 0.25 };

const WALL: f64 = 0.01;

/// Default gripper base position: outside the opening, centered laterally,
/// halfway up the bin. The standoff is a compromise pinned from both sides:
/// retracted cup fronts must stay outside the opening yet close enough that
/// a rate-limited 1 Hz ram stroke (which tops out near 5 cm of reach no
/// matter how large the commanded amplitude grows) still lands on a blocker
/// at the mouth, while a full retraction must still carry an attached
/// target's centroid past the opening.
pub const GRIPPER_BASE: Vec3 = Vec3 { x: -0.045, y: 0.0, z: 0.10 };

/// Suction cup radius, shared by corridor checks and contact resolution.
pub const CUP_RADIUS: f64 = 0.015;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("target tilt {0} deg outside [0, 45]")]
    TiltOutOfRange(f64),
    #[error("dimension range [{0}, {1}] is invalid")]
    BadDimRange(f64, f64),
    #[error("placement jitter {0} must be non-negative")]
    BadJitter(f64),
    #[error("could not place objects without overlap after {0} attempts")]
    Placement(usize),
    #[error("scene has no target object")]
    NoTarget,
    #[error("no object with id {0}")]
    UnknownObject(u32),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

// ---------- Object types ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Target,
    Top,
    Blocker,
    BinFixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    Free,
    /// Rigidly attached to an actuator tip. `tip_from_object` maps object
    /// local coordinates into the tip frame and stays constant while held.
    Attached { actuator_id: u8, tip_from_object: Pose },
}

/// One axis-aligned box of a (possibly compound) object, in the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPart {
    pub half: Vec3,
    pub offset: Vec3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub kind: ObjectKind,
    pub parts: Vec<BoxPart>,
    pub mesh: TriangleMesh,
    pub pose: Pose,
    /// Half extents of the primary part.
    pub half_extents: Vec3,
    pub mass: f64,
    pub friction_mu: f64,
    pub attachment: Attachment,
    /// Set once the object has lost support and settled downward.
    pub dropped: bool,
}

impl SceneObject {
    fn from_parts(id: u32, kind: ObjectKind, parts: Vec<BoxPart>, pose: Pose, mass: f64) -> Result<Self, SceneError> {
        let meshes: Vec<TriangleMesh> = parts
            .iter()
            .map(|p| {
                crate::geometry::transform_mesh(
                    &TriangleMesh::axis_aligned_box(p.half),
                    &Pose::from_translation(p.offset),
                )
            })
            .collect();
        let mesh = TriangleMesh::merged(&meshes)?;
        let half_extents = parts[0].half;
        Ok(SceneObject {
            id,
            kind,
            parts,
            mesh,
            pose,
            half_extents,
            mass,
            friction_mu: 0.5,
            attachment: Attachment::Free,
            dropped: false,
        })
    }

    pub fn simple_box(id: u32, kind: ObjectKind, half: Vec3, pose: Pose, mass: f64) -> Result<Self, SceneError> {
        Self::from_parts(id, kind, vec![BoxPart { half, offset: Vec3::ZERO }], pose, mass)
    }

    pub fn is_movable(&self) -> bool {
        self.kind != ObjectKind::BinFixture
    }

    /// World-space centroid: the transformed mean of the raw mesh vertices.
    pub fn centroid(&self) -> Vec3 {
        self.pose.apply_point(self.mesh.vertex_centroid())
    }

    pub fn world_mesh(&self) -> TriangleMesh {
        crate::geometry::transform_mesh(&self.mesh, &self.pose)
    }

    /// Yaw of the object about the world vertical axis.
    pub fn yaw(&self) -> f64 {
        self.pose.rotation.yaw_angle()
    }

    /// World z of the lowest face.
    pub fn bottom_z(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| self.pose.translation.z + p.offset.z - p.half.z)
            .fold(f64::INFINITY, f64::min)
    }

    /// World z of the highest face.
    pub fn top_z(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| self.pose.translation.z + p.offset.z + p.half.z)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Plan-view rectangles of every part: `(center, half, yaw)` in world XY.
    /// Valid because poses only translate and yaw.
    pub fn plan_rects(&self) -> Vec<plan::Rect> {
        let yaw = self.yaw();
        self.parts
            .iter()
            .map(|p| {
                let c = self.pose.apply_point(p.offset);
                plan::Rect { cx: c.x, cy: c.y, hx: p.half.x, hy: p.half.y, yaw }
            })
            .collect()
    }

    /// Top support patches `(z, rect)` other objects can rest on.
    pub fn top_patches(&self) -> Vec<(f64, plan::Rect)> {
        let yaw = self.yaw();
        self.parts
            .iter()
            .map(|p| {
                let c = self.pose.apply_point(p.offset);
                (c.z + p.half.z, plan::Rect { cx: c.x, cy: c.y, hx: p.half.x, hy: p.half.y, yaw })
            })
            .collect()
    }

    /// Footprint rectangles at the object's lowest level (within 1e-6).
    pub fn bottom_patches(&self) -> Vec<plan::Rect> {
        let bottom = self.bottom_z();
        let yaw = self.yaw();
        self.parts
            .iter()
            .filter(|p| (self.pose.translation.z + p.offset.z - p.half.z - bottom).abs() < 1e-6)
            .map(|p| {
                let c = self.pose.apply_point(p.offset);
                plan::Rect { cx: c.x, cy: c.y, hx: p.half.x, hy: p.half.y, yaw }
            })
            .collect()
    }
}

// ---------- Scene ----------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub gripper_base_pose: Pose,
    pub sim_time: f64,
}

impl Scene {
    pub fn target(&self) -> Result<&SceneObject, SceneError> {
        self.objects.iter().find(|o| o.kind == ObjectKind::Target).ok_or(SceneError::NoTarget)
    }

    pub fn target_id(&self) -> Result<u32, SceneError> {
        Ok(self.target()?.id)
    }

    pub fn object(&self, id: u32) -> Result<&SceneObject, SceneError> {
        self.objects.iter().find(|o| o.id == id).ok_or(SceneError::UnknownObject(id))
    }

    pub fn object_mut(&mut self, id: u32) -> Result<&mut SceneObject, SceneError> {
        self.objects.iter_mut().find(|o| o.id == id).ok_or(SceneError::UnknownObject(id))
    }

    /// World-space meshes of every object, movable and fixed, keyed by id.
    pub fn world_meshes(&self) -> Vec<(u32, TriangleMesh)> {
        self.objects.iter().map(|o| (o.id, o.world_mesh())).collect()
    }

    /// Concatenated OBJ export of the whole scene for external viewers.
    pub fn to_obj(&self) -> String {
        let meshes: Vec<TriangleMesh> = self.objects.iter().map(|o| o.world_mesh()).collect();
        TriangleMesh::merged(&meshes).map(|m| m.to_obj()).unwrap_or_default()
    }
}

/// Euclidean distance from the gripper base to the target centroid.
pub fn target_centroid_distance(scene: &Scene) -> Result<f64, SceneError> {
    Ok((scene.target()?.centroid() - scene.gripper_base_pose.translation).length())
}

/// True when a point lies strictly inside the bin interior volume.
pub fn bin_contains(p: Vec3) -> bool {
    p.x > BIN_MIN.x
        && p.x < BIN_MAX.x
        && p.y > BIN_MIN.y
        && p.y < BIN_MAX.y
        && p.z > BIN_MIN.z
        && p.z < BIN_MAX.z
}

// ---------- Scenario specification ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Single,
    Stacked,
    HardStacked,
    Blocked,
}

/// Inclusive `[lo, hi]` range for one box dimension (full size, meters).
pub type DimRange = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindDims {
    pub depth: DimRange,
    pub width: DimRange,
    pub height: DimRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimsRanges {
    pub target: KindDims,
    pub top: KindDims,
    pub blocker: KindDims,
}

impl DimsRanges {
    /// Defaults sized so every strategy phase fits within the actuator
    /// stroke: shallow targets for stacked scenes, a tall target behind a
    /// short blocker for blocked scenes.
    pub fn default_for(kind: ScenarioKind) -> DimsRanges {
        let stacked = DimsRanges {
            target: KindDims { depth: [0.036, 0.044], width: [0.09, 0.12], height: [0.09, 0.12] },
            top: KindDims { depth: [0.028, 0.036], width: [0.06, 0.09], height: [0.05, 0.08] },
            blocker: KindDims { depth: [0.03, 0.04], width: [0.032, 0.04], height: [0.095, 0.11] },
        };
        match kind {
            ScenarioKind::Single | ScenarioKind::Stacked | ScenarioKind::HardStacked => stacked,
            ScenarioKind::Blocked => DimsRanges {
                // Depth capped so a full retraction still pulls the centroid
                // out of the opening (rest cup front -0.03 m + half depth).
                target: KindDims { depth: [0.04, 0.05], width: [0.09, 0.11], height: [0.19, 0.22] },
                // Sized against the 0.035 m mount offsets and the 0.015 m
                // cup radius: wide enough (half ≥ 0.05 against ≤ 6 mm of
                // lateral jitter) that both low-row corridors stay obstructed
                // and a low-row ram lands square on the face rather than
                // glancing off a corner, and short enough that the high row
                // passes over the top.
                blocker: KindDims { depth: [0.03, 0.04], width: [0.10, 0.12], height: [0.095, 0.11] },
                ..stacked
            },
        }
    }
}

fn default_jitter() -> f64 {
    0.01
}

/// Everything needed to generate a scene deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Yaw of the target's front face away from the approach axis, degrees
    /// in `[0, 45]`. The near side is `+y`.
    #[serde(default)]
    pub target_tilt_deg: f64,
    pub rng_seed: u64,
    /// `None` uses [`DimsRanges::default_for`] the scenario kind.
    #[serde(default)]
    pub dims_ranges: Option<DimsRanges>,
    /// Uniform positional jitter applied to placements, meters.
    #[serde(default = "default_jitter")]
    pub placement_jitter: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, target_tilt_deg: f64, rng_seed: u64) -> Self {
        ScenarioSpec {
            kind,
            target_tilt_deg,
            rng_seed,
            dims_ranges: None,
            placement_jitter: default_jitter(),
        }
    }
}

// ---------- Generation ----------

/// Depth of the target's front-face center for generated scenes (before
/// jitter). Chosen together with the gripper base offset and stroke so that
/// a straightening push of a few centimeters stays within reach.
const TARGET_FACE_X: f64 = 0.052;
/// Front-face depth for the tall target behind a blocker.
const BLOCKED_TARGET_FACE_X: f64 = 0.075;
/// Front-face depth of the blocker box. At the bin mouth: a reciprocating
/// push at 1 Hz is slew-limited to roughly 5 cm of extension, so the ram
/// can only reach obstructions standing at the opening.
const BLOCKER_FACE_X: f64 = 0.0;

const PLACEMENT_ATTEMPTS: usize = 32;

fn sample_range(rng: &mut ChaCha8Rng, range: DimRange) -> Result<f64, SceneError> {
    if !(range[0].is_finite() && range[1].is_finite() && range[0] > 0.0 && range[1] >= range[0]) {
        return Err(SceneError::BadDimRange(range[0], range[1]));
    }
    if range[1] == range[0] {
        return Ok(range[0]);
    }
    Ok(rng.random_range(range[0]..=range[1]))
}

fn bin_fixtures(mut next_id: u32) -> Vec<SceneObject> {
    let specs = [
        // floor
        (Vec3::new(0.20, 0.0, -WALL / 2.0), Vec3::new(0.20 + WALL, 0.15 + WALL, WALL / 2.0)),
        // back wall
        (Vec3::new(BIN_MAX.x + WALL / 2.0, 0.0, 0.125), Vec3::new(WALL / 2.0, 0.15 + WALL, 0.125)),
        // side walls
        (Vec3::new(0.20, -(0.15 + WALL / 2.0), 0.125), Vec3::new(0.20, WALL / 2.0, 0.125)),
        (Vec3::new(0.20, 0.15 + WALL / 2.0, 0.125), Vec3::new(0.20, WALL / 2.0, 0.125)),
        // lip strip across the top of the opening
        (Vec3::new(0.01, 0.0, BIN_MAX.z - 0.005), Vec3::new(0.01, 0.15, 0.005)),
    ];
    specs
        .iter()
        .map(|(center, half)| {
            let obj = SceneObject::simple_box(
                next_id,
                ObjectKind::BinFixture,
                *half,
                Pose::from_translation(*center),
                1.0,
            )
            .expect("fixture boxes are valid");
            next_id += 1;
            obj
        })
        .collect()
}

/// Generates a scene from the spec. Deterministic: equal specs (including
/// seed) produce identical scenes.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scene, SceneError> {
    if !(0.0..=45.0).contains(&spec.target_tilt_deg) || !spec.target_tilt_deg.is_finite() {
        return Err(SceneError::TiltOutOfRange(spec.target_tilt_deg));
    }
    if !(spec.placement_jitter >= 0.0 && spec.placement_jitter.is_finite()) {
        return Err(SceneError::BadJitter(spec.placement_jitter));
    }
    let dims = spec.dims_ranges.unwrap_or_else(|| DimsRanges::default_for(spec.kind));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    for attempt in 0..PLACEMENT_ATTEMPTS {
        match try_generate(spec, &dims, &mut rng) {
            Ok(scene) => return Ok(scene),
            Err(SceneError::Placement(_)) if attempt + 1 < PLACEMENT_ATTEMPTS => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SceneError::Placement(PLACEMENT_ATTEMPTS))
}

fn try_generate(spec: &ScenarioSpec, dims: &DimsRanges, rng: &mut ChaCha8Rng) -> Result<Scene, SceneError> {
    let jit = |rng: &mut ChaCha8Rng, j: f64| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
    let tilt = spec.target_tilt_deg.to_radians();
    let mut objects: Vec<SceneObject> = Vec::new();

    let td = sample_range(rng, dims.target.depth)?;
    let tw = sample_range(rng, dims.target.width)?;
    let th = sample_range(rng, dims.target.height)?;
    let t_mass = rng.random_range(0.15..=0.30);

    match spec.kind {
        ScenarioKind::Single | ScenarioKind::Stacked | ScenarioKind::HardStacked => {
            let face_x = TARGET_FACE_X + jit(rng, spec.placement_jitter);
            let face_y = jit(rng, spec.placement_jitter);
            let a = td / 2.0;
            // Centroid placed so the front-face center lands at (face_x, face_y).
            let center = Vec3::new(
                face_x + a * tilt.cos(),
                face_y + a * tilt.sin(),
                th / 2.0,
            );
            let pose = Pose::new(Quat::from_yaw(tilt), center);
            let mut parts = vec![BoxPart { half: Vec3::new(a, tw / 2.0, th / 2.0), offset: Vec3::ZERO }];
            if spec.kind == ScenarioKind::HardStacked {
                // Back ledge, top-flush with the main box, that keeps a top
                // object supported while it is pushed backward.
                let ledge_d = 0.05;
                let ledge_h = 0.03;
                parts.push(BoxPart {
                    half: Vec3::new(ledge_d / 2.0, tw / 2.0, ledge_h / 2.0),
                    offset: Vec3::new(a + ledge_d / 2.0, 0.0, th / 2.0 - ledge_h / 2.0),
                });
            }
            objects.push(SceneObject::from_parts(0, ObjectKind::Target, parts, pose, t_mass)?);

            if spec.kind != ScenarioKind::Single {
                let od = sample_range(rng, dims.top.depth)?;
                let ow = sample_range(rng, dims.top.width)?;
                let oh = sample_range(rng, dims.top.height)?;
                // Front-aligned with the target face, small random setback,
                // resting exactly on the target's top face.
                let setback = rng.random_range(0.0..=0.008);
                let center = Vec3::new(
                    face_x + setback + od / 2.0,
                    face_y + jit(rng, spec.placement_jitter),
                    th + oh / 2.0,
                );
                objects.push(SceneObject::simple_box(
                    1,
                    ObjectKind::Top,
                    Vec3::new(od / 2.0, ow / 2.0, oh / 2.0),
                    Pose::from_translation(center),
                    0.5 * t_mass,
                )?);
            }
        }
        ScenarioKind::Blocked => {
            let face_x = BLOCKED_TARGET_FACE_X + jit(rng, spec.placement_jitter.min(0.008));
            let face_y = jit(rng, spec.placement_jitter.min(0.008));
            let a = td / 2.0;
            let center = Vec3::new(face_x + a, face_y, th / 2.0);
            objects.push(SceneObject::simple_box(
                0,
                ObjectKind::Target,
                Vec3::new(a, tw / 2.0, th / 2.0),
                Pose::from_translation(center),
                t_mass,
            )?);

            let bd = sample_range(rng, dims.blocker.depth)?;
            let bw = sample_range(rng, dims.blocker.width)?;
            let bh = sample_range(rng, dims.blocker.height)?;
            // One-sided depth jitter keeps the blocker inside the bin; the
            // lateral jitter stays small enough that a low-row ram lands
            // near a corner of the front face.
            let bx = BLOCKER_FACE_X + 0.002 + jit(rng, 0.002);
            let by = jit(rng, 0.006);
            objects.push(SceneObject::simple_box(
                1,
                ObjectKind::Blocker,
                Vec3::new(bd / 2.0, bw / 2.0, bh / 2.0),
                Pose::from_translation(Vec3::new(bx + bd / 2.0, by, bh / 2.0)),
                0.1,
            )?);
        }
    }

    let movable_count = objects.len() as u32;
    objects.extend(bin_fixtures(movable_count));

    let scene = Scene {
        objects,
        gripper_base_pose: Pose::from_translation(GRIPPER_BASE),
        sim_time: 0.0,
    };
    validate_scene(&scene, spec)?;
    Ok(scene)
}

fn validate_scene(scene: &Scene, spec: &ScenarioSpec) -> Result<(), SceneError> {
    let movables: Vec<&SceneObject> = scene.objects.iter().filter(|o| o.is_movable()).collect();
    // Movables must lie inside the bin and clear of each other.
    for obj in &movables {
        if obj.mass <= 0.0 {
            return Err(SceneError::Placement(0));
        }
        for rect in obj.plan_rects() {
            for [cx, cy] in rect.corners() {
                if cx < BIN_MIN.x - 1e-9 || cx > BIN_MAX.x + 1e-9 || cy < BIN_MIN.y - 1e-9 || cy > BIN_MAX.y + 1e-9 {
                    return Err(SceneError::Placement(0));
                }
            }
        }
        if obj.bottom_z() < -1e-9 || obj.top_z() > BIN_MAX.z + 1e-9 {
            return Err(SceneError::Placement(0));
        }
    }
    for (i, a) in movables.iter().enumerate() {
        for b in movables.iter().skip(i + 1) {
            if boxes_interpenetrate(a, b, 1e-6) {
                return Err(SceneError::Placement(0));
            }
        }
    }
    // Blocked scenes must actually block the straight-line approach.
    if spec.kind == ScenarioKind::Blocked {
        let target = scene.target()?;
        let blocker = scene
            .objects
            .iter()
            .find(|o| o.kind == ObjectKind::Blocker)
            .ok_or(SceneError::Placement(0))?;
        if !segment_intersects_object(GRIPPER_BASE, target.centroid(), CUP_RADIUS, blocker) {
            return Err(SceneError::Placement(0));
        }
    }
    Ok(())
}

/// True when two yaw-only boxes overlap by more than `tol` in 3D.
pub fn boxes_interpenetrate(a: &SceneObject, b: &SceneObject, tol: f64) -> bool {
    for (ra, pa) in a.plan_rects().into_iter().zip(&a.parts) {
        let az0 = a.pose.translation.z + pa.offset.z - pa.half.z;
        let az1 = a.pose.translation.z + pa.offset.z + pa.half.z;
        for (rb, pb) in b.plan_rects().into_iter().zip(&b.parts) {
            let bz0 = b.pose.translation.z + pb.offset.z - pb.half.z;
            let bz1 = b.pose.translation.z + pb.offset.z + pb.half.z;
            let dz = az1.min(bz1) - az0.max(bz0);
            if dz <= tol {
                continue;
            }
            if plan::penetration_depth(&ra, &rb) > tol {
                return true;
            }
        }
    }
    false
}

/// True when the segment from `p0` to `p1`, inflated by `radius`, passes
/// through any part of the object. Conservative sampled test.
pub fn segment_intersects_object(p0: Vec3, p1: Vec3, radius: f64, obj: &SceneObject) -> bool {
    let inv = obj.pose.inverse();
    const STEPS: usize = 512;
    for i in 0..=STEPS {
        let t = i as f64 / STEPS as f64;
        let p = inv.apply_point(p0 + (p1 - p0) * t);
        for part in &obj.parts {
            let d = Vec3::new(
                (p.x - part.offset.x).abs() - part.half.x,
                (p.y - part.offset.y).abs() - part.half.y,
                (p.z - part.offset.z).abs() - part.half.z,
            );
            let outside = Vec3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0)).length();
            if outside <= radius {
                return true;
            }
        }
    }
    false
}

// ---------- Plan-view rectangle math ----------

/// 2D geometry for yawed rectangles in the horizontal plane: overlap tests,
/// clipped intersection areas, and penetration depths. Shared by scene
/// validation and the quasi-static physics.
pub mod plan {
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Rect {
        pub cx: f64,
        pub cy: f64,
        pub hx: f64,
        pub hy: f64,
        pub yaw: f64,
    }

    impl Rect {
        pub fn corners(&self) -> [[f64; 2]; 4] {
            let (s, c) = self.yaw.sin_cos();
            let rot = |x: f64, y: f64| [self.cx + x * c - y * s, self.cy + x * s + y * c];
            [
                rot(-self.hx, -self.hy),
                rot(self.hx, -self.hy),
                rot(self.hx, self.hy),
                rot(-self.hx, self.hy),
            ]
        }

        pub fn area(&self) -> f64 {
            4.0 * self.hx * self.hy
        }
    }

    fn shoelace(poly: &[[f64; 2]]) -> f64 {
        let n = poly.len();
        let mut acc = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            acc += poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1];
        }
        acc.abs() * 0.5
    }

    /// Sutherland-Hodgman clip of convex `subject` against convex `clip`
    /// (both counter-clockwise).
    fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let mut output: Vec<[f64; 2]> = subject.to_vec();
        for i in 0..clip.len() {
            if output.is_empty() {
                break;
            }
            let a = clip[i];
            let b = clip[(i + 1) % clip.len()];
            // Signed distance from the clip line, positive on the kept side.
            let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            let input = std::mem::take(&mut output);
            for j in 0..input.len() {
                let cur = input[j];
                let prev = input[(j + input.len() - 1) % input.len()];
                let f_cur = side(cur);
                let f_prev = side(prev);
                if (f_cur >= 0.0) != (f_prev >= 0.0) {
                    let t = f_prev / (f_prev - f_cur);
                    output.push([
                        prev[0] + (cur[0] - prev[0]) * t,
                        prev[1] + (cur[1] - prev[1]) * t,
                    ]);
                }
                if f_cur >= 0.0 {
                    output.push(cur);
                }
            }
        }
        output
    }

    /// Exact intersection area of two yawed rectangles.
    pub fn overlap_area(a: &Rect, b: &Rect) -> f64 {
        let poly = clip_convex(&a.corners(), &b.corners());
        if poly.len() < 3 {
            0.0
        } else {
            shoelace(&poly)
        }
    }

    /// Area and centroid of the intersection region, `None` when disjoint.
    pub fn overlap_area_centroid(a: &Rect, b: &Rect) -> Option<(f64, [f64; 2])> {
        let poly = clip_convex(&a.corners(), &b.corners());
        if poly.len() < 3 {
            return None;
        }
        let n = poly.len();
        let mut area2 = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            let w = poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1];
            area2 += w;
            cx += (poly[i][0] + poly[j][0]) * w;
            cy += (poly[i][1] + poly[j][1]) * w;
        }
        if area2.abs() < 1e-18 {
            return None;
        }
        Some((area2.abs() * 0.5, [cx / (3.0 * area2), cy / (3.0 * area2)]))
    }

    /// Minimum translation vector separating `b` from `a`: returns
    /// `(depth, unit_axis)` such that translating `b` by `depth * axis`
    /// resolves the overlap. `None` when already separated.
    pub fn mtv(a: &Rect, b: &Rect) -> Option<(f64, [f64; 2])> {
        let mut best: Option<(f64, [f64; 2])> = None;
        for rect in [a, b] {
            let (s, c) = rect.yaw.sin_cos();
            for axis in [[c, s], [-s, c]] {
                let project = |r: &Rect| {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for p in r.corners() {
                        let v = p[0] * axis[0] + p[1] * axis[1];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    (lo, hi)
                };
                let (alo, ahi) = project(a);
                let (blo, bhi) = project(b);
                if ahi.min(bhi) - alo.max(blo) <= 0.0 {
                    return None;
                }
                // Distance to clear along +axis and along -axis; containment
                // makes these differ from the raw projection overlap.
                let d_pos = ahi - blo;
                let d_neg = bhi - alo;
                let (d, dir) = if d_pos <= d_neg {
                    (d_pos, [axis[0], axis[1]])
                } else {
                    (d_neg, [-axis[0], -axis[1]])
                };
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, dir));
                }
            }
        }
        best
    }

    /// Minimum translation distance separating two yawed rectangles along
    /// their face axes (SAT). Zero or negative means no overlap.
    pub fn penetration_depth(a: &Rect, b: &Rect) -> f64 {
        let mut min_pen = f64::INFINITY;
        for rect in [a, b] {
            let (s, c) = rect.yaw.sin_cos();
            for axis in [[c, s], [-s, c]] {
                let project = |r: &Rect| {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for p in r.corners() {
                        let v = p[0] * axis[0] + p[1] * axis[1];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    (lo, hi)
                };
                let (alo, ahi) = project(a);
                let (blo, bhi) = project(b);
                let pen = ahi.min(bhi) - alo.max(blo);
                if pen <= 0.0 {
                    return pen;
                }
                min_pen = min_pen.min(pen);
            }
        }
        min_pen
    }
}
