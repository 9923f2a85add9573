//! Rule-based picking strategies: plain single-object grasping, the
//! straighten-then-push routine for stacked scenes, and the seal-then-ram
//! routine for blocked scenes.
//!
//! Every strategy is a deterministic per-tick map from sensor inputs and a
//! small explicit `StrategyState` to one `PolicyAction` of servo setpoints
//! and valve commands. The harness owns timing and physics; policies never
//! touch the scene directly. Role assignment is the one scene-aware step and
//! runs once before the episode starts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::gripper::{
    pd_command, ActuatorState, GraspConfig, PdGains, VacuumEjectorState, ACTUATOR_COUNT,
    MOUNT_OFFSETS,
};
use crate::scene::{segment_intersects_object, ObjectKind, Scene, SceneError, CUP_RADIUS};
use crate::sensors::{boresight_mean, frame_mean, split_halves_near, ToFFrame, SENSOR_RECESS};

// ---------- Errors ----------

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("scene error: {0}")]
    Scene(#[from] SceneError),
    #[error("policy cannot run in phase {0:?}")]
    WrongPhase(Phase),
    #[error(transparent)]
    Gripper(#[from] crate::gripper::GripperError),
}

// ---------- Actions and roles ----------

/// Servo setpoints handed to the PD layer plus per-station valve commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    /// Desired extensions in metres, clamped to [0, stroke].
    pub desired_extensions: [f64; ACTUATOR_COUNT],
    pub valve_commands: [bool; ACTUATOR_COUNT],
}

impl PolicyAction {
    pub fn hold(actuators: &[ActuatorState; ACTUATOR_COUNT]) -> PolicyAction {
        PolicyAction {
            desired_extensions: [
                actuators[0].extension,
                actuators[1].extension,
                actuators[2].extension,
                actuators[3].extension,
            ],
            valve_commands: [false; ACTUATOR_COUNT],
        }
    }

    fn clamped(mut self, actuators: &[ActuatorState; ACTUATOR_COUNT]) -> PolicyAction {
        for (d, a) in self.desired_extensions.iter_mut().zip(actuators) {
            *d = d.clamp(0.0, a.stroke);
        }
        self
    }
}

/// Which actuator grasps, which straightens, which pushes. The fourth stays
/// idle. Always three distinct ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePlan {
    pub grasp_actuator: u8,
    pub straighten_actuator: u8,
    pub push_actuator: u8,
}

/// Why an episode ended without a successful pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoTargetDetected,
    SealTimeout,
    StraightenStall,
    BlockerStuck,
    ObjectDropped,
    StepLimit,
}

/// Per-tick result: keep driving, or abort with a diagnosed failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyOutcome {
    Continue(PolicyAction),
    Fail(FailureReason),
}

// ---------- Phases ----------

/// Phases across all three strategies, ordered so that every strategy's
/// legal path is strictly increasing: stacked runs Straighten, PushTop, then
/// the shared grasp chain; blocked runs the grasp chain up to Seal, then Ram,
/// then Extract; single starts at Search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Straighten,
    PushTop,
    Search,
    Approach,
    Creep,
    Seal,
    Ram,
    Extract,
}

impl Phase {
    /// Position in the global forward order, for the no-backward-jump check.
    pub fn rank(self) -> u8 {
        match self {
            Phase::Straighten => 0,
            Phase::PushTop => 1,
            Phase::Search => 2,
            Phase::Approach => 3,
            Phase::Creep => 4,
            Phase::Seal => 5,
            Phase::Ram => 6,
            Phase::Extract => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransition {
    pub t: f64,
    pub from: Phase,
    pub to: Phase,
}

impl PhaseTransition {
    pub fn to_jsonl_row(&self) -> String {
        serde_json::to_string(self).expect("transition serializes")
    }
}

// ---------- Configuration ----------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub gains: PdGains,
    pub grasp: GraspConfig,
    /// Left/right mean imbalance that triggers straightening, metres.
    pub imbalance_delta: f64,
    /// Depth window around the boresight reading inside which zones count
    /// toward the halves; wider spill belongs to the background, not the
    /// face being straightened.
    pub imbalance_window: f64,
    /// Ram sinusoid: initial amplitude, amplitude growth rate, angular rate.
    pub sinus_a0: f64,
    pub sinus_alpha: f64,
    pub sinus_omega: f64,
    /// Straightening fails after this long without imbalance improvement.
    pub straighten_timeout: f64,
    /// Push-top gives up (without failing the episode) after this long.
    pub push_timeout: f64,
    /// Sealing fails after this long in the press phase.
    pub seal_timeout: f64,
    pub episode_timeout: f64,
    /// Estimated lip gap below which the grasp valve opens.
    pub valve_open_gap: f64,
    /// Search and press creep speed as a fraction of max_rate.
    pub creep_fraction: f64,
    /// Frame-mean jump on the push sensor that confirms the top object fell.
    pub push_clear_jump: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        let grasp = GraspConfig::default();
        PolicyConfig {
            gains: PdGains::default(),
            grasp,
            imbalance_delta: 0.01,
            imbalance_window: 0.08,
            sinus_a0: 0.01,
            sinus_alpha: 0.005,
            sinus_omega: std::f64::consts::TAU,
            straighten_timeout: 3.0,
            push_timeout: 10.0,
            seal_timeout: 5.0,
            episode_timeout: 20.0,
            valve_open_gap: 2.0 * grasp.seal_gap_max,
            creep_fraction: 0.25,
            push_clear_jump: 0.05,
        }
    }
}

// ---------- Strategy state ----------

/// Mutable per-episode policy memory. Everything the strategies remember
/// lives here, so a policy tick is a pure function of (inputs, state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyState {
    pub phase: Phase,
    pub phase_entry_time: f64,
    pub sinus_amplitude: f64,
    pub sinus_omega: f64,
    /// PD error memory per actuator.
    pub prev_errors: [f64; ACTUATOR_COUNT],
    /// Push sensor's frame mean at PushTop entry.
    pub push_baseline: Option<f64>,
    /// Best straightening imbalance so far and when it last improved.
    pub best_imbalance: f64,
    pub last_improvement_time: f64,
    pub transitions: Vec<PhaseTransition>,
}

impl StrategyState {
    pub fn new(start: Phase, t0: f64, cfg: &PolicyConfig) -> StrategyState {
        StrategyState {
            phase: start,
            phase_entry_time: t0,
            sinus_amplitude: cfg.sinus_a0,
            sinus_omega: cfg.sinus_omega,
            prev_errors: [0.0; ACTUATOR_COUNT],
            push_baseline: None,
            best_imbalance: f64::INFINITY,
            last_improvement_time: t0,
            transitions: Vec::new(),
        }
    }

    fn enter(&mut self, to: Phase, t: f64) {
        self.transitions.push(PhaseTransition { t, from: self.phase, to });
        self.phase = to;
        self.phase_entry_time = t;
    }
}

// ---------- Policy inputs ----------

/// Everything a strategy may look at on one control tick. Frames are indexed
/// by actuator id; `grasped` is the per-station pressure-threshold flag.
#[derive(Debug)]
pub struct PolicyInputs<'a> {
    pub t: f64,
    pub dt: f64,
    pub frames: &'a [ToFFrame; ACTUATOR_COUNT],
    pub actuators: &'a [ActuatorState; ACTUATOR_COUNT],
    pub ejector: &'a VacuumEjectorState,
    pub grasped: [bool; ACTUATOR_COUNT],
    /// Harness-evaluated approach-corridor check, present in blocked scenes.
    pub corridor_clear: Option<bool>,
}

/// Estimated cup-lip gap from a raw boresight mean: the sensor sits
/// `SENSOR_RECESS` behind the cup centre, and the cup surface another radius
/// ahead of that.
pub fn lip_gap_estimate(d_mean: f64) -> f64 {
    d_mean - SENSOR_RECESS - CUP_RADIUS
}

/// Ram setpoint at `tau` seconds after phase entry: a sinusoid whose
/// amplitude grows linearly, `(a0 + alpha*tau) * sin(omega*tau)`. Unclamped;
/// negative half-waves read as a fully retracted command.
pub fn sinus_extension(a0: f64, alpha: f64, omega: f64, tau: f64) -> f64 {
    (a0 + alpha * tau) * (omega * tau).sin()
}

// ---------- Role assignment ----------

fn mount_point(id: usize, base: &crate::geometry::Pose) -> Vec3 {
    base.apply_point(MOUNT_OFFSETS[id])
}

/// Squared lateral distance from an actuator's axis (a +x line through its
/// mount) to a world point.
fn axis_distance_sq(id: usize, base: &crate::geometry::Pose, p: Vec3) -> f64 {
    let m = mount_point(id, base);
    (p.y - m.y) * (p.y - m.y) + (p.z - m.z) * (p.z - m.z)
}

/// Picks the three working actuators for a scene.
///
/// Grasp: the actuator whose axis passes nearest the target centroid among
/// those whose straight approach corridor is unobstructed (all of them, if
/// every corridor is). Straighten: nearest to the near half of the target
/// face, the side the tilt brings closer to the gripper. Push: for a stacked
/// scene, nearest to the top object's centroid; for a blocked scene, the
/// low-row actuator nearest the blocker, so the ram actually engages it. All
/// choices exclude already-assigned ids and break ties by lowest id.
pub fn assign_roles(scene: &Scene) -> Result<RolePlan, PolicyError> {
    let base = &scene.gripper_base_pose;
    let target = scene.target()?;
    let centroid = target.centroid();

    let obstacles: Vec<&crate::scene::SceneObject> = scene
        .objects
        .iter()
        .filter(|o| matches!(o.kind, ObjectKind::Top | ObjectKind::Blocker))
        .collect();

    // The cup sweeps straight along its axis, so the obstruction test runs
    // from the retracted tip to the axis point at the centroid's depth.
    let corridor_clear = |id: usize| {
        let start = mount_point(id, base);
        let dir = base.apply_vector(Vec3::new(1.0, 0.0, 0.0));
        let end = start + dir * (centroid - start).dot(dir);
        obstacles
            .iter()
            .all(|o| !segment_intersects_object(start, end, CUP_RADIUS, o))
    };
    let nearest = |ids: &[usize], p: Vec3| {
        ids.iter()
            .copied()
            .min_by(|&a, &b| {
                axis_distance_sq(a, base, p)
                    .partial_cmp(&axis_distance_sq(b, base, p))
                    .expect("distances are finite")
                    .then(a.cmp(&b))
            })
            .expect("candidate list is never empty")
    };

    let all: Vec<usize> = (0..ACTUATOR_COUNT).collect();
    let clear: Vec<usize> = all.iter().copied().filter(|&id| corridor_clear(id)).collect();
    let grasp = nearest(if clear.is_empty() { &all } else { &clear }, centroid);

    // Near half of the target face: +y when the yaw is positive, because the
    // face normal tips that side toward the gripper.
    let yaw = target.yaw();
    let face_w = target.half_extents.y;
    let near_offset = if yaw.abs() > 1e-9 {
        0.5 * face_w * yaw.signum()
    } else {
        0.0
    };
    let near_point = Vec3::new(centroid.x, centroid.y + near_offset, centroid.z);
    let rem: Vec<usize> = all.iter().copied().filter(|&id| id != grasp).collect();
    let straighten = nearest(&rem, near_point);

    let rem: Vec<usize> =
        rem.iter().copied().filter(|&id| id != straighten).collect();
    let blocker = scene.objects.iter().find(|o| o.kind == ObjectKind::Blocker);
    let top = scene.objects.iter().find(|o| o.kind == ObjectKind::Top);
    let push = if let Some(b) = blocker {
        // Ram with a low-row actuator: the high row passes over the blocker
        // and would never touch it.
        let low: Vec<usize> = rem
            .iter()
            .copied()
            .filter(|&id| MOUNT_OFFSETS[id].z < 0.0)
            .collect();
        let pool = if low.is_empty() { &rem } else { &low };
        nearest(pool, b.centroid())
    } else if let Some(t) = top {
        nearest(&rem, t.centroid())
    } else {
        rem[0]
    };

    Ok(RolePlan {
        grasp_actuator: grasp as u8,
        straighten_actuator: straighten as u8,
        push_actuator: push as u8,
    })
}

// ---------- Shared grasp chain ----------

/// Runs the Search/Approach/Creep/Seal chain for one actuator and advances
/// to `on_grasped` once the vacuum holds. All other actuators are commanded
/// to retract, and only the grasp valve is ever opened.
fn grasp_chain_tick(
    state: &mut StrategyState,
    inputs: &PolicyInputs,
    grasp_id: usize,
    on_grasped: Phase,
    cfg: &PolicyConfig,
) -> Result<PolicyOutcome, PolicyError> {
    let actuators = inputs.actuators;
    let frame = &inputs.frames[grasp_id];
    // Boresight, not the whole frame: the cup lands where its axis points,
    // and outer zones spilling past the face would drag the estimate up.
    let mean = boresight_mean(frame).ok();
    let gap = mean.map(lip_gap_estimate);
    let ext = actuators[grasp_id].extension;
    let max_rate = actuators[grasp_id].max_rate;
    let stroke = actuators[grasp_id].stroke;

    // Phase transitions first, so a freshly satisfied condition acts on the
    // same tick. Each arm moves strictly forward, so this loop terminates.
    loop {
        let next = match state.phase {
            Phase::Search => match mean {
                Some(_) => Some(Phase::Approach),
                None if ext >= stroke - 1e-9 => {
                    return Ok(PolicyOutcome::Fail(FailureReason::NoTargetDetected))
                }
                None => None,
            },
            Phase::Approach => match gap {
                Some(g) if g <= cfg.valve_open_gap => Some(Phase::Seal),
                Some(_) => None,
                None => Some(Phase::Creep),
            },
            Phase::Creep => match gap {
                Some(g) if g <= cfg.valve_open_gap => Some(Phase::Seal),
                _ if ext >= stroke - 1e-9 => {
                    return Ok(PolicyOutcome::Fail(FailureReason::SealTimeout))
                }
                _ => None,
            },
            Phase::Seal => {
                if inputs.grasped[grasp_id] {
                    Some(on_grasped)
                } else if inputs.t - state.phase_entry_time > cfg.seal_timeout {
                    return Ok(PolicyOutcome::Fail(FailureReason::SealTimeout));
                } else {
                    None
                }
            }
            other => return Err(PolicyError::WrongPhase(other)),
        };
        match next {
            Some(to) => {
                state.enter(to, inputs.t);
                if to == on_grasped {
                    // Caller's phase; it emits the action.
                    return Ok(PolicyOutcome::Continue(PolicyAction::hold(actuators)));
                }
            }
            None => break,
        }
    }

    let mut action = PolicyAction {
        desired_extensions: [0.0; ACTUATOR_COUNT],
        valve_commands: [false; ACTUATOR_COUNT],
    };
    match state.phase {
        Phase::Search | Phase::Creep => {
            action.desired_extensions[grasp_id] =
                ext + cfg.creep_fraction * max_rate * inputs.dt;
        }
        Phase::Approach => {
            let g = gap.expect("approach holds a valid reading");
            let cmd = pd_command(
                Some(g),
                state.prev_errors[grasp_id],
                &cfg.gains,
                &cfg.grasp,
                inputs.dt,
                max_rate,
            )?;
            state.prev_errors[grasp_id] = g - cfg.grasp.d_target;
            action.desired_extensions[grasp_id] = ext + cmd * inputs.dt;
        }
        Phase::Seal => {
            // Press slowly into the surface with the valve open until the
            // station holds.
            action.desired_extensions[grasp_id] =
                ext + cfg.creep_fraction * max_rate * inputs.dt;
            action.valve_commands[grasp_id] = true;
        }
        other => return Err(PolicyError::WrongPhase(other)),
    }
    Ok(PolicyOutcome::Continue(action.clamped(actuators)))
}

fn extract_action(
    inputs: &PolicyInputs,
    grasp_id: usize,
    valve_open: bool,
) -> PolicyAction {
    let mut action = PolicyAction {
        desired_extensions: [0.0; ACTUATOR_COUNT],
        valve_commands: [false; ACTUATOR_COUNT],
    };
    action.valve_commands[grasp_id] = valve_open;
    action.clamped(inputs.actuators)
}

// ---------- Single-object strategy ----------

/// Plain grasp: search forward, servo to the standoff, press and seal, then
/// retract with the valve held open.
pub fn single_object_policy(
    state: &mut StrategyState,
    inputs: &PolicyInputs,
    plan: &RolePlan,
    cfg: &PolicyConfig,
) -> Result<PolicyOutcome, PolicyError> {
    let grasp_id = plan.grasp_actuator as usize;
    match state.phase {
        Phase::Search | Phase::Approach | Phase::Creep | Phase::Seal => {
            match grasp_chain_tick(state, inputs, grasp_id, Phase::Extract, cfg)? {
                PolicyOutcome::Continue(_) if state.phase == Phase::Extract => {
                    Ok(PolicyOutcome::Continue(extract_action(inputs, grasp_id, true)))
                }
                other => Ok(other),
            }
        }
        Phase::Extract => Ok(PolicyOutcome::Continue(extract_action(inputs, grasp_id, true))),
        other => Err(PolicyError::WrongPhase(other)),
    }
}

// ---------- Stacked strategy ----------

/// Straighten the tilted target with one actuator, shove the stacked top
/// object with another, then run the plain grasp on the target.
pub fn stacked_rule_policy(
    state: &mut StrategyState,
    inputs: &PolicyInputs,
    plan: &RolePlan,
    cfg: &PolicyConfig,
) -> Result<PolicyOutcome, PolicyError> {
    let grasp_id = plan.grasp_actuator as usize;
    let straighten_id = plan.straighten_actuator as usize;
    let push_id = plan.push_actuator as usize;

    match state.phase {
        Phase::Straighten => {
            // Halves are compared only inside a depth window around the
            // boresight reading, so zones spilling past the face onto the
            // walls cannot fake (or mask) a tilt.
            let frame = &inputs.frames[grasp_id];
            let imbalance = boresight_mean(frame).ok().and_then(|reference| {
                match split_halves_near(frame, reference, cfg.imbalance_window) {
                    (Ok(l), Ok(r)) => Some(l - r),
                    _ => None,
                }
            });
            let magnitude = imbalance.map(f64::abs);

            let entering = state.phase_entry_time == inputs.t;
            let balanced_enough = match magnitude {
                // Entry gate is delta; once pushing, drive down to delta/2.
                Some(m) if entering => m <= cfg.imbalance_delta,
                Some(m) => m <= 0.5 * cfg.imbalance_delta,
                // No reading on both halves: nothing to straighten against.
                None => true,
            };
            if balanced_enough {
                state.enter(Phase::PushTop, inputs.t);
                state.push_baseline = frame_mean(&inputs.frames[push_id]).ok();
                return stacked_rule_policy(state, inputs, plan, cfg);
            }

            let m = magnitude.expect("imbalanced branch has a reading");
            if m < state.best_imbalance - 1e-4 {
                state.best_imbalance = m;
                state.last_improvement_time = inputs.t;
            } else if inputs.t - state.last_improvement_time > cfg.straighten_timeout {
                return Ok(PolicyOutcome::Fail(FailureReason::StraightenStall));
            }

            let mut action = PolicyAction {
                desired_extensions: [0.0; ACTUATOR_COUNT],
                valve_commands: [false; ACTUATOR_COUNT],
            };
            let a = &inputs.actuators[straighten_id];
            action.desired_extensions[straighten_id] =
                a.extension + a.max_rate * inputs.dt;
            Ok(PolicyOutcome::Continue(action.clamped(inputs.actuators)))
        }
        Phase::PushTop => {
            let a = &inputs.actuators[push_id];
            let mean = frame_mean(&inputs.frames[push_id]).ok();
            let jumped = match (state.push_baseline, mean) {
                (Some(base), Some(now)) => now - base > cfg.push_clear_jump,
                // Sensor went from seeing something to seeing nothing: the
                // object left the field of view.
                (Some(_), None) => true,
                (None, _) => false,
            };
            let done = jumped
                || a.extension >= a.stroke - 1e-9
                || inputs.t - state.phase_entry_time > cfg.push_timeout;
            if done {
                state.enter(Phase::Search, inputs.t);
                return stacked_rule_policy(state, inputs, plan, cfg);
            }
            let mut action = PolicyAction {
                desired_extensions: [0.0; ACTUATOR_COUNT],
                valve_commands: [false; ACTUATOR_COUNT],
            };
            action.desired_extensions[push_id] = a.extension + a.max_rate * inputs.dt;
            Ok(PolicyOutcome::Continue(action.clamped(inputs.actuators)))
        }
        _ => single_object_policy(state, inputs, plan, cfg),
    }
}

// ---------- Blocked strategy ----------

/// Seal the target first so it cannot drift, ram the blocker with a growing
/// sinusoid until the corridor clears, then extract with the valve still on.
pub fn blocked_rule_policy(
    state: &mut StrategyState,
    inputs: &PolicyInputs,
    plan: &RolePlan,
    cfg: &PolicyConfig,
) -> Result<PolicyOutcome, PolicyError> {
    let grasp_id = plan.grasp_actuator as usize;
    let push_id = plan.push_actuator as usize;

    match state.phase {
        Phase::Search | Phase::Approach | Phase::Creep | Phase::Seal => {
            match grasp_chain_tick(state, inputs, grasp_id, Phase::Ram, cfg)? {
                PolicyOutcome::Continue(_) if state.phase == Phase::Ram => {
                    blocked_rule_policy(state, inputs, plan, cfg)
                }
                other => Ok(other),
            }
        }
        Phase::Ram => {
            if inputs.corridor_clear == Some(true) {
                state.enter(Phase::Extract, inputs.t);
                return blocked_rule_policy(state, inputs, plan, cfg);
            }
            let tau = inputs.t - state.phase_entry_time;
            let amplitude = cfg.sinus_a0 + cfg.sinus_alpha * tau;
            state.sinus_amplitude = amplitude;
            if amplitude >= inputs.actuators[push_id].stroke {
                return Ok(PolicyOutcome::Fail(FailureReason::BlockerStuck));
            }
            let mut action = PolicyAction {
                desired_extensions: [0.0; ACTUATOR_COUNT],
                valve_commands: [false; ACTUATOR_COUNT],
            };
            // Hold the sealed target where it is; the valve stays open from
            // the phase-1 seal to the end of the episode.
            action.desired_extensions[grasp_id] = inputs.actuators[grasp_id].extension;
            action.valve_commands[grasp_id] = true;
            action.desired_extensions[push_id] =
                sinus_extension(cfg.sinus_a0, cfg.sinus_alpha, cfg.sinus_omega, tau);
            Ok(PolicyOutcome::Continue(action.clamped(inputs.actuators)))
        }
        Phase::Extract => Ok(PolicyOutcome::Continue(extract_action(inputs, grasp_id, true))),
        other => Err(PolicyError::WrongPhase(other)),
    }
}

// ---------- Tests ----------
