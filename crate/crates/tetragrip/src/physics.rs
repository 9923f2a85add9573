//! Quasi-static contact resolution.
//!
//! Motion is geometric, not dynamic: actuator tips expel interpenetrating
//! movable boxes along the contact normal projected onto the horizontal
//! plane, attached objects ride rigidly on their suction tip, and anything
//! whose footprint loses support settles onto the next surface below. There
//! are no forces, impulses, or inertia; the strategies under test depend
//! only on whether objects slide, stay, or fall.
//!
//! Every movable motion is clamped so that no two boxes interpenetrate and
//! fixtures never move. Objects resting on a moved object are carried with
//! it (static friction at desk scale), which is what lets a stacked top box
//! track a target being straightened underneath it.

use crate::geometry::{Pose, Quat, Vec3};
use crate::scene::{plan, ObjectKind, Scene, SceneObject};
use crate::scene::{Attachment, SceneError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("dt {0} outside (0, 0.1] s")]
    BadDt(f64),
    #[error("attach requires contact: gap {gap} m exceeds {max_gap} m")]
    AttachWithoutContact { gap: f64, max_gap: f64 },
    #[error("object {0} is not movable")]
    NotMovable(u32),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

// ---------- Configuration ----------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysicsConfig {
    /// Below this fraction of supported footprint area an object falls.
    pub support_threshold: f64,
    /// Vertical tolerance for "resting on" checks, meters.
    pub support_gap: f64,
    /// Yaw applied per meter of off-center push translation, radians.
    pub yaw_rate_rad_per_m: f64,
    /// Contact offset (as a fraction of the pushed face's half width)
    /// beyond which a push also yaws the object.
    pub yaw_offset_fraction: f64,
    /// Interpenetration tolerance for clamping, meters.
    pub contact_tol: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            support_threshold: 0.25,
            support_gap: 0.002,
            // 5 degrees per centimeter of push.
            yaw_rate_rad_per_m: 5.0_f64.to_radians() / 0.01,
            yaw_offset_fraction: 0.5,
            contact_tol: 1e-6,
        }
    }
}

// ---------- Report types ----------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActuatorTip {
    pub actuator_id: u8,
    pub tip_pose: Pose,
    pub tip_radius: f64,
    pub suction_engaged: bool,
}

impl ActuatorTip {
    pub fn center(&self) -> Vec3 {
        self.tip_pose.translation
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PushResult {
    pub object_id: u32,
    pub displacement: Vec3,
    /// Yaw change about the vertical axis, radians.
    pub rotated_by: f64,
    /// True when the object could not move at all; displacement is then zero.
    pub resisted: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SupportState {
    pub object_id: u32,
    pub supported_fraction: f64,
    /// Snapshot of `supported_fraction < support_threshold` at check time,
    /// i.e. whether this step made the object fall.
    pub dropped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub pushes: Vec<PushResult>,
    pub supports: Vec<SupportState>,
    /// Actuators whose attached object was wedged or driven into a fixture
    /// this step; the seal broke and the object was detached.
    pub seal_breaks: Vec<u8>,
    /// Per-actuator axial retraction (meters, along -x) needed to expel the
    /// tip from unyielding geometry. The actuator layer applies it to the
    /// extension, modeling a stalled motor.
    pub tip_pushback: [f64; 4],
    /// True when any pose changed; callers use it to invalidate raycast
    /// acceleration structures.
    pub moved_any: bool,
}

// ---------- Sphere-box contact ----------

struct SphereContact {
    /// Penetration depth along `push_dir`.
    depth: f64,
    /// Unit direction that moves the box away from the sphere, world frame.
    push_dir: Vec3,
    /// Contact point on the box surface, world frame.
    point: Vec3,
    part_index: usize,
}

/// Deepest contact between a sphere and any part of the object, if the
/// sphere penetrates it.
fn sphere_object_contact(center: Vec3, radius: f64, obj: &SceneObject) -> Option<SphereContact> {
    let local = obj.pose.inverse().apply_point(center);
    let mut best: Option<SphereContact> = None;
    for (pi, part) in obj.parts.iter().enumerate() {
        let p = local - part.offset;
        let q = Vec3::new(
            p.x.clamp(-part.half.x, part.half.x),
            p.y.clamp(-part.half.y, part.half.y),
            p.z.clamp(-part.half.z, part.half.z),
        );
        let d = p - q;
        let dist = d.length();
        let (depth, dir_local, q_local) = if dist > 1e-12 {
            (radius - dist, d * (-1.0 / dist), q)
        } else {
            // Center inside the box: escape through the nearest face.
            let pens = [part.half.x - p.x.abs(), part.half.y - p.y.abs(), part.half.z - p.z.abs()];
            let k = (0..3).min_by(|&a, &b| pens[a].total_cmp(&pens[b])).unwrap();
            let sign = [p.x, p.y, p.z][k].signum();
            let mut dir = Vec3::ZERO;
            match k {
                0 => dir.x = -sign,
                1 => dir.y = -sign,
                _ => dir.z = -sign,
            }
            let mut q = p;
            match k {
                0 => q.x = sign * part.half.x,
                1 => q.y = sign * part.half.y,
                _ => q.z = sign * part.half.z,
            }
            (radius + pens[k], dir, q)
        };
        if depth > 0.0 && best.as_ref().map_or(true, |b| depth > b.depth) {
            best = Some(SphereContact {
                depth,
                push_dir: obj.pose.apply_vector(dir_local),
                point: obj.pose.apply_point(q_local + part.offset),
                part_index: pi,
            });
        }
    }
    best
}

/// Signed clearance between the sphere surface and the object surface;
/// negative means penetration.
pub fn sphere_object_gap(center: Vec3, radius: f64, obj: &SceneObject) -> f64 {
    let local = obj.pose.inverse().apply_point(center);
    let mut best = f64::INFINITY;
    for part in &obj.parts {
        let p = local - part.offset;
        let q = Vec3::new(
            p.x.clamp(-part.half.x, part.half.x),
            p.y.clamp(-part.half.y, part.half.y),
            p.z.clamp(-part.half.z, part.half.z),
        );
        best = best.min((p - q).length() - radius);
    }
    best
}

// ---------- Box-box overlap ----------

/// Parts of `a` posed at `pose_a` against parts of `b` at its own pose:
/// maximum plan-penetration among part pairs that overlap vertically.
fn object_overlap_at(
    a: &SceneObject,
    pose_a: &Pose,
    b: &SceneObject,
    tol: f64,
) -> Option<(f64, [f64; 2])> {
    let yaw_a = pose_a.rotation.yaw_angle();
    let mut worst: Option<(f64, [f64; 2])> = None;
    for pa in &a.parts {
        let ca = pose_a.apply_point(pa.offset);
        let ra = plan::Rect { cx: ca.x, cy: ca.y, hx: pa.half.x, hy: pa.half.y, yaw: yaw_a };
        let (az0, az1) = (ca.z - pa.half.z, ca.z + pa.half.z);
        for pb in &b.parts {
            let cb = b.pose.apply_point(pb.offset);
            let (bz0, bz1) = (cb.z - pb.half.z, cb.z + pb.half.z);
            if az1.min(bz1) - az0.max(bz0) <= tol {
                continue;
            }
            let rb = plan::Rect { cx: cb.x, cy: cb.y, hx: pb.half.x, hy: pb.half.y, yaw: b.pose.rotation.yaw_angle() };
            if let Some((pen, axis)) = plan::mtv(&ra, &rb) {
                if pen > tol && worst.as_ref().map_or(true, |(w, _)| pen > *w) {
                    worst = Some((pen, axis));
                }
            }
        }
    }
    worst
}

fn pose_collides(scene: &Scene, id: u32, pose: &Pose, tol: f64) -> bool {
    let obj = scene.object(id).expect("id valid");
    scene
        .objects
        .iter()
        .filter(|o| o.id != id)
        .any(|o| object_overlap_at(obj, pose, o, tol).is_some())
}

// ---------- Movable motion with clamping ----------

struct MoveOutcome {
    displacement: Vec3,
    rotated_by: f64,
    resisted: bool,
}

/// Pose after translating by `s * delta` and yawing by `s * dyaw` about the
/// plan centroid `pivot`.
fn posed(obj: &SceneObject, pivot: Vec3, delta: Vec3, dyaw: f64, s: f64) -> Pose {
    let rot = Quat::from_yaw(s * dyaw);
    let t = obj.pose.translation;
    let arm = Vec3::new(t.x - pivot.x, t.y - pivot.y, 0.0);
    let swung = rot.rotate(arm);
    let new_t = Vec3::new(pivot.x + swung.x + s * delta.x, pivot.y + swung.y + s * delta.y, t.z);
    Pose::new(rot.mul(obj.pose.rotation).normalized(), new_t)
}

/// Moves a movable object by a horizontal translation plus yaw, clamping
/// against everything else, bulldozing movable obstacles out of the way
/// when possible, and carrying objects that rest on top.
fn move_object(
    scene: &mut Scene,
    id: u32,
    delta: Vec3,
    dyaw: f64,
    depth: usize,
    cfg: &PhysicsConfig,
    moved_any: &mut bool,
) -> MoveOutcome {
    let none = MoveOutcome { displacement: Vec3::ZERO, rotated_by: 0.0, resisted: true };
    if depth > 3 {
        return none;
    }
    let (pivot, old_pose) = {
        let obj = scene.object(id).expect("id valid");
        if !obj.is_movable() || !matches!(obj.attachment, Attachment::Free) {
            return none;
        }
        (obj.centroid(), obj.pose)
    };
    let delta = Vec3::new(delta.x, delta.y, 0.0);
    if delta.length() < 1e-15 && dyaw.abs() < 1e-15 {
        return MoveOutcome { displacement: Vec3::ZERO, rotated_by: 0.0, resisted: false };
    }

    // Identify riders before anything moves.
    let riders = riders_of(scene, id, cfg);

    let target_pose = {
        let obj = scene.object(id).expect("id valid");
        posed(obj, pivot, delta, dyaw, 1.0)
    };
    let mut scale = 1.0;
    if pose_collides(scene, id, &target_pose, cfg.contact_tol) {
        // Try to bulldoze movable obstacles aside, then re-test.
        for _ in 0..3 {
            let blocking: Vec<u32> = {
                let obj = scene.object(id).expect("id valid");
                scene
                    .objects
                    .iter()
                    .filter(|o| o.id != id && o.is_movable() && matches!(o.attachment, Attachment::Free))
                    .filter(|o| object_overlap_at(obj, &target_pose, o, cfg.contact_tol).is_some())
                    .map(|o| o.id)
                    .collect()
            };
            if blocking.is_empty() {
                break;
            }
            for bid in blocking {
                let mtv = {
                    let obj = scene.object(id).expect("id valid");
                    let other = scene.object(bid).expect("id valid");
                    object_overlap_at(obj, &target_pose, other, cfg.contact_tol)
                };
                if let Some((pen, axis)) = mtv {
                    let push = Vec3::new(axis[0], axis[1], 0.0) * (pen + 1e-6);
                    move_object(scene, bid, push, 0.0, depth + 1, cfg, moved_any);
                }
            }
            if !pose_collides(scene, id, &target_pose, cfg.contact_tol) {
                break;
            }
        }
        if pose_collides(scene, id, &target_pose, cfg.contact_tol) {
            // Largest collision-free fraction of the motion.
            let mut lo = 0.0;
            let mut hi = 1.0;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let p = {
                    let obj = scene.object(id).expect("id valid");
                    posed(obj, pivot, delta, dyaw, mid)
                };
                if pose_collides(scene, id, &p, cfg.contact_tol) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            scale = lo;
        }
    }
    // Sub-micrometer residual motion counts as fully blocked; reporting it
    // as zero keeps the resisted invariant exact and prevents creep into
    // walls at the collision tolerance.
    if scale * delta.length() < 1e-6 && scale * dyaw.abs() < 1e-6 {
        return none;
    }
    let new_pose = {
        let obj = scene.object(id).expect("id valid");
        posed(obj, pivot, delta, dyaw, scale)
    };
    scene.object_mut(id).expect("id valid").pose = new_pose;
    *moved_any = true;

    // Carry riders with the same rigid plan transform.
    let applied_yaw = scale * dyaw;
    let rot = Quat::from_yaw(applied_yaw);
    for rid in riders {
        let r_c = scene.object(rid).expect("id valid").centroid();
        let arm = Vec3::new(r_c.x - pivot.x, r_c.y - pivot.y, 0.0);
        let swung = rot.rotate(arm);
        let r_delta = Vec3::new(
            pivot.x + swung.x + scale * delta.x - r_c.x,
            pivot.y + swung.y + scale * delta.y - r_c.y,
            0.0,
        );
        move_object(scene, rid, r_delta, applied_yaw, depth + 1, cfg, moved_any);
    }

    MoveOutcome {
        displacement: new_pose.translation - old_pose.translation,
        rotated_by: applied_yaw,
        resisted: false,
    }
}

/// Movable objects resting mostly on top of `id`.
fn riders_of(scene: &Scene, id: u32, cfg: &PhysicsConfig) -> Vec<u32> {
    let base = scene.object(id).expect("id valid");
    let patches = base.top_patches();
    scene
        .objects
        .iter()
        .filter(|o| o.id != id && o.is_movable() && matches!(o.attachment, Attachment::Free))
        .filter(|o| {
            let bottom = o.bottom_z();
            let rects = o.bottom_patches();
            let area: f64 = rects.iter().map(|r| r.area()).sum();
            let mut supported = 0.0;
            for (pz, patch) in &patches {
                if (bottom - pz).abs() <= cfg.support_gap {
                    for r in &rects {
                        supported += plan::overlap_area(r, patch);
                    }
                }
            }
            area > 0.0 && supported > 0.5 * area
        })
        .map(|o| o.id)
        .collect()
}

// ---------- Support and settling ----------

/// Fraction of the object's bottom footprint resting on surfaces directly
/// beneath it (within the configured vertical gap).
pub fn supported_fraction(obj: &SceneObject, scene: &Scene, cfg: &PhysicsConfig) -> f64 {
    let bottom = obj.bottom_z();
    let rects = obj.bottom_patches();
    let area: f64 = rects.iter().map(|r| r.area()).sum();
    if area <= 0.0 {
        return 0.0;
    }
    let mut supported = 0.0;
    for other in &scene.objects {
        if other.id == obj.id {
            continue;
        }
        for (pz, patch) in other.top_patches() {
            if (bottom - pz).abs() <= cfg.support_gap && bottom >= pz - cfg.support_gap {
                for r in &rects {
                    supported += plan::overlap_area(r, &patch);
                }
            }
        }
    }
    (supported / area).min(1.0)
}

/// Support patches at the object's current level, for slide-off direction.
fn support_centroid(obj: &SceneObject, scene: &Scene, cfg: &PhysicsConfig) -> Option<[f64; 2]> {
    let bottom = obj.bottom_z();
    let rects = obj.bottom_patches();
    let mut total = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for other in &scene.objects {
        if other.id == obj.id {
            continue;
        }
        for (pz, patch) in other.top_patches() {
            if (bottom - pz).abs() <= cfg.support_gap {
                for r in &rects {
                    if let Some((a, c)) = plan::overlap_area_centroid(r, &patch) {
                        total += a;
                        cx += a * c[0];
                        cy += a * c[1];
                    }
                }
            }
        }
    }
    if total > 1e-12 {
        Some([cx / total, cy / total])
    } else {
        None
    }
}

/// Drops an unsupported object: slide clear of the edge it tipped over,
/// fall to the highest surface below, then resolve residual overlap.
fn settle_object(scene: &mut Scene, id: u32, cfg: &PhysicsConfig) {
    for _ in 0..4 {
        let (centroid, frac) = {
            let obj = scene.object(id).expect("id valid");
            (obj.centroid(), supported_fraction(obj, scene, cfg))
        };
        if frac >= cfg.support_threshold {
            break;
        }
        // Tip over: slide horizontally away from the residual support until
        // fully off it. The object is effectively airborne, so collisions
        // are resolved after landing, not during.
        if frac > 0.0 {
            let dir = {
                let obj = scene.object(id).expect("id valid");
                match support_centroid(obj, scene, cfg) {
                    Some(c) => {
                        let d = Vec3::new(centroid.x - c[0], centroid.y - c[1], 0.0);
                        if d.length() > 1e-9 {
                            d * (1.0 / d.length())
                        } else {
                            Vec3::new(1.0, 0.0, 0.0)
                        }
                    }
                    None => Vec3::new(1.0, 0.0, 0.0),
                }
            };
            for _ in 0..125 {
                let obj = scene.object_mut(id).expect("id valid");
                obj.pose.translation = obj.pose.translation + dir * 0.002;
                let obj = scene.object(id).expect("id valid");
                let inside = obj.plan_rects().iter().all(|r| {
                    r.corners().iter().all(|c| {
                        c[0] >= crate::scene::BIN_MIN.x - 1e-9
                            && c[0] <= crate::scene::BIN_MAX.x + 1e-9
                            && c[1] >= crate::scene::BIN_MIN.y - 1e-9
                            && c[1] <= crate::scene::BIN_MAX.y + 1e-9
                    })
                });
                if !inside {
                    // Leaning on a wall: stop sliding and rest here.
                    let obj = scene.object_mut(id).expect("id valid");
                    obj.pose.translation = obj.pose.translation - dir * 0.002;
                    break;
                }
                if supported_fraction(scene.object(id).expect("id valid"), scene, cfg) <= 0.0 {
                    break;
                }
            }
        }
        // Fall: land on the highest overlapped surface at or below.
        let landing = {
            let obj = scene.object(id).expect("id valid");
            let bottom = obj.bottom_z();
            let rects = obj.bottom_patches();
            let mut best = f64::NEG_INFINITY;
            for other in &scene.objects {
                if other.id == obj.id {
                    continue;
                }
                for (pz, patch) in other.top_patches() {
                    if pz <= bottom + 1e-9 && pz > best {
                        let overlap: f64 = rects.iter().map(|r| plan::overlap_area(r, &patch)).sum();
                        if overlap > 1e-8 {
                            best = pz;
                        }
                    }
                }
            }
            if best.is_finite() {
                best
            } else {
                0.0
            }
        };
        {
            let obj = scene.object_mut(id).expect("id valid");
            let drop = obj.bottom_z() - landing;
            obj.pose.translation.z -= drop;
            obj.dropped = true;
        }
        // Landed overlapping something (partial edge case): push clear.
        for _ in 0..8 {
            let overlap = {
                let obj = scene.object(id).expect("id valid");
                scene
                    .objects
                    .iter()
                    .filter(|o| o.id != id)
                    .filter_map(|o| object_overlap_at(obj, &obj.pose, o, cfg.contact_tol))
                    .max_by(|a, b| a.0.total_cmp(&b.0))
            };
            match overlap {
                Some((pen, axis)) => {
                    // mtv pushes the other object; move self the opposite way.
                    let obj = scene.object_mut(id).expect("id valid");
                    obj.pose.translation.x -= axis[0] * (pen + 1e-6);
                    obj.pose.translation.y -= axis[1] * (pen + 1e-6);
                }
                None => break,
            }
        }
    }
}

// ---------- Attachment ----------

/// Rigidly attaches an object to an actuator tip. Requires the cup to be in
/// contact: surface gap at most `max_gap`.
pub fn attach(scene: &mut Scene, tip: &ActuatorTip, object_id: u32, max_gap: f64) -> Result<(), PhysicsError> {
    let gap = {
        let obj = scene.object(object_id)?;
        if !obj.is_movable() {
            return Err(PhysicsError::NotMovable(object_id));
        }
        sphere_object_gap(tip.center(), tip.tip_radius, obj)
    };
    if gap > max_gap {
        return Err(PhysicsError::AttachWithoutContact { gap, max_gap });
    }
    let tip_inv = tip.tip_pose.inverse();
    let obj = scene.object_mut(object_id)?;
    let rel = tip_inv.compose(&obj.pose);
    obj.attachment = Attachment::Attached { actuator_id: tip.actuator_id, tip_from_object: rel };
    Ok(())
}

/// Releases an attached object in place.
pub fn detach(scene: &mut Scene, object_id: u32) -> Result<(), PhysicsError> {
    scene.object_mut(object_id)?.attachment = Attachment::Free;
    Ok(())
}

fn attached_object_of(scene: &Scene, actuator_id: u8) -> Option<(u32, Pose)> {
    scene.objects.iter().find_map(|o| match o.attachment {
        Attachment::Attached { actuator_id: a, tip_from_object } if a == actuator_id => {
            Some((o.id, tip_from_object))
        }
        _ => None,
    })
}

// ---------- Step ----------

/// Advances the quasi-static world by one tick: resolves tip pushes, moves
/// attached objects with their tips, settles unsupported objects, and
/// reports what happened.
pub fn step_physics(
    scene: &mut Scene,
    tips: &[ActuatorTip],
    dt: f64,
    cfg: &PhysicsConfig,
) -> Result<StepReport, PhysicsError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(PhysicsError::BadDt(dt));
    }
    let mut report = StepReport::default();
    let mut tips: Vec<ActuatorTip> = tips.to_vec();
    tips.sort_by_key(|t| t.actuator_id);

    // 1. Attached objects ride their tips rigidly.
    for tip in &tips {
        if let Some((obj_id, rel)) = attached_object_of(scene, tip.actuator_id) {
            let desired = tip.tip_pose.compose(&rel);
            let old = scene.object(obj_id)?.pose;
            let delta = desired.translation - old.translation;
            if delta.length() < 1e-15 {
                continue;
            }
            // Try the full rigid motion, bulldozing free movables out of the
            // path; fixtures and other held objects do not yield.
            let ok = try_place_attached(scene, obj_id, &desired, cfg, &mut report.moved_any);
            if ok {
                scene.object_mut(obj_id)?.pose = desired;
                report.moved_any = true;
                // Objects resting on the carried one ride along.
                carry_translation(scene, obj_id, delta, cfg, &mut report.moved_any);
            } else {
                // Wedged: clamp along the motion, break the seal.
                let mut lo = 0.0;
                let mut hi = 1.0;
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    let pose = Pose::new(desired.rotation, old.translation + delta * mid);
                    if pose_collides(scene, obj_id, &pose, cfg.contact_tol) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let applied = delta * lo;
                if applied.length() > 0.0 {
                    let obj = scene.object_mut(obj_id)?;
                    obj.pose.translation = old.translation + applied;
                    report.moved_any = true;
                    carry_translation(scene, obj_id, applied, cfg, &mut report.moved_any);
                }
                detach(scene, obj_id)?;
                report.seal_breaks.push(tip.actuator_id);
            }
        }
    }

    // 2. Free tips push whatever they penetrate.
    for tip in &tips {
        if attached_object_of(scene, tip.actuator_id).is_some() {
            continue;
        }
        for _ in 0..4 {
            let hit = scene
                .objects
                .iter()
                .filter(|o| o.is_movable())
                .filter_map(|o| sphere_object_contact(tip.center(), tip.tip_radius, o).map(|c| (o.id, c)))
                .max_by(|a, b| a.1.depth.total_cmp(&b.1.depth));
            let Some((obj_id, contact)) = hit else { break };
            if contact.depth <= 1e-9 {
                // Touching, not penetrating.
                break;
            }
            let held = !matches!(scene.object(obj_id)?.attachment, Attachment::Free);
            let delta = Vec3::new(contact.push_dir.x, contact.push_dir.y, 0.0) * contact.depth;
            if held || delta.length() < 1e-12 {
                // Held objects and pure vertical contacts do not yield.
                report.pushes.push(PushResult {
                    object_id: obj_id,
                    displacement: Vec3::ZERO,
                    rotated_by: 0.0,
                    resisted: true,
                });
                break;
            }
            let dyaw = push_yaw(scene.object(obj_id)?, &contact, cfg);
            let outcome = move_object(scene, obj_id, delta, dyaw, 0, cfg, &mut report.moved_any);
            report.pushes.push(PushResult {
                object_id: obj_id,
                displacement: outcome.displacement,
                rotated_by: outcome.rotated_by,
                resisted: outcome.resisted,
            });
            if outcome.resisted {
                break;
            }
        }
    }

    // 3. Tips stall against anything that would not yield.
    for tip in &tips {
        let held = attached_object_of(scene, tip.actuator_id).map(|(id, _)| id);
        let pushback = tip_pushback(scene, tip, held);
        if let Some(slot) = report.tip_pushback.get_mut(tip.actuator_id as usize) {
            *slot = pushback;
        }
    }

    // 4. Support pass: unsupported objects fall, repeatedly, since one fall
    // can unsupport the next object.
    let mut latest: std::collections::BTreeMap<u32, SupportState> = Default::default();
    for _ in 0..scene.objects.len() + 1 {
        let mut any_fell = false;
        let ids: Vec<u32> = scene
            .objects
            .iter()
            .filter(|o| o.is_movable() && matches!(o.attachment, Attachment::Free))
            .map(|o| o.id)
            .collect();
        for id in ids {
            let frac = supported_fraction(scene.object(id)?, scene, cfg);
            let falls = frac < cfg.support_threshold;
            latest.insert(id, SupportState { object_id: id, supported_fraction: frac, dropped: falls });
            if falls {
                settle_object(scene, id, cfg);
                report.moved_any = true;
                any_fell = true;
            }
        }
        if !any_fell {
            break;
        }
    }
    report.supports = latest.into_values().collect();
    Ok(report)
}

/// Yaw increment for an off-center push, with torque-determined sign.
fn push_yaw(obj: &SceneObject, contact: &SphereContact, cfg: &PhysicsConfig) -> f64 {
    let push = Vec3::new(contact.push_dir.x, contact.push_dir.y, 0.0);
    let len = push.length();
    if len < 1e-12 {
        return 0.0;
    }
    let push = push * (1.0 / len);
    // Face half-width, from the contacted part's orientation.
    let part = &obj.parts[contact.part_index];
    let local_dir = obj.pose.rotation.conjugate().rotate(push);
    let half_width = if local_dir.x.abs() >= local_dir.y.abs() { part.half.y } else { part.half.x };
    let part_center = obj.pose.apply_point(part.offset);
    let perp = Vec3::new(-push.y, push.x, 0.0);
    let lateral = (contact.point - part_center).dot(perp);
    if lateral.abs() <= cfg.yaw_offset_fraction * half_width {
        return 0.0;
    }
    let centroid = obj.centroid();
    let r = contact.point - centroid;
    let torque_z = r.x * push.y - r.y * push.x;
    cfg.yaw_rate_rad_per_m * contact.depth * torque_z.signum()
}

/// True when the attached object fits at `desired`, bulldozing free
/// movables out of the way if needed.
fn try_place_attached(
    scene: &mut Scene,
    obj_id: u32,
    desired: &Pose,
    cfg: &PhysicsConfig,
    moved_any: &mut bool,
) -> bool {
    for _ in 0..3 {
        if !pose_collides(scene, obj_id, desired, cfg.contact_tol) {
            return true;
        }
        let blocking: Vec<u32> = {
            let obj = scene.object(obj_id).expect("id valid");
            scene
                .objects
                .iter()
                .filter(|o| o.id != obj_id && o.is_movable() && matches!(o.attachment, Attachment::Free))
                .filter(|o| object_overlap_at(obj, desired, o, cfg.contact_tol).is_some())
                .map(|o| o.id)
                .collect()
        };
        if blocking.is_empty() {
            return false;
        }
        for bid in blocking {
            let mtv = {
                let obj = scene.object(obj_id).expect("id valid");
                let other = scene.object(bid).expect("id valid");
                object_overlap_at(obj, desired, other, cfg.contact_tol)
            };
            if let Some((pen, axis)) = mtv {
                let push = Vec3::new(axis[0], axis[1], 0.0) * (pen + 1e-6);
                move_object(scene, bid, push, 0.0, 1, cfg, moved_any);
            }
        }
    }
    !pose_collides(scene, obj_id, desired, cfg.contact_tol)
}

/// Carries riders along a pure translation (attached-object motion).
fn carry_translation(scene: &mut Scene, id: u32, delta: Vec3, cfg: &PhysicsConfig, moved_any: &mut bool) {
    let delta = Vec3::new(delta.x, delta.y, 0.0);
    if delta.length() < 1e-15 {
        return;
    }
    for rid in riders_of(scene, id, cfg) {
        move_object(scene, rid, delta, 0.0, 1, cfg, moved_any);
    }
}

/// Axial retraction needed to expel the tip from objects that did not
/// yield. Zero when the tip is clear.
fn tip_pushback(scene: &Scene, tip: &ActuatorTip, held: Option<u32>) -> f64 {
    let clear = |center: Vec3| {
        scene
            .objects
            .iter()
            .filter(|o| Some(o.id) != held)
            .all(|o| sphere_object_gap(center, tip.tip_radius, o) >= -1e-9)
    };
    if clear(tip.center()) {
        return 0.0;
    }
    let retract = Vec3::new(-1.0, 0.0, 0.0);
    let mut hi = 0.002;
    while hi < 0.3 && !clear(tip.center() + retract * hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if clear(tip.center() + retract * mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
