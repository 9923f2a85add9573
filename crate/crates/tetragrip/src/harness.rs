//! Closed-loop episode harness. A 1 ms master clock drives physics, ToF
//! sensing, the vacuum ejector, and the control policy at their own rates;
//! suite sweeps aggregate pick rates over scenario x tilt x policy cells and
//! emit a CSV plus per-episode JSONL rows.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_bvh, Bvh, GeometryError, Pose, Ray, TriangleMesh, Vec3};
use crate::gripper::{
    default_actuators, evaluate_seal, is_grasped, step_actuator, step_vacuum, tip_pose,
    ActuatorState, ControlLogRow, GripperError, SuctionCupState, VacuumEjectorState,
    ACTUATOR_COUNT, SEAL_PROBE_RANGE,
};
use crate::physics::{attach, detach, step_physics, ActuatorTip, PhysicsConfig, PhysicsError};
use crate::policies::{
    assign_roles, blocked_rule_policy, single_object_policy, stacked_rule_policy, FailureReason,
    Phase, PhaseTransition, PolicyAction, PolicyConfig, PolicyError, PolicyInputs, PolicyOutcome,
    RolePlan, StrategyState,
};
use crate::scene::{
    bin_contains, generate_scenario, Attachment, ObjectKind, ScenarioKind, ScenarioSpec, Scene,
    SceneError, CUP_RADIUS,
};
use crate::sensors::{frame_mean, sample_tof, SensorError, ToFConfig, ToFFrame, SENSOR_RECESS, TOF_ZONES};

// ---------- Errors ----------

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("physics: {0}")]
    Physics(#[from] PhysicsError),
    #[error("sensor: {0}")]
    Sensor(#[from] SensorError),
    #[error("gripper: {0}")]
    Gripper(#[from] GripperError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("rate {0} Hz outside (0, 1000] (the master clock ticks at 1 kHz)")]
    BadRate(f64),
    #[error("policy network: {0}")]
    Rl(Box<crate::rl::RlError>),
    #[error("unknown policy {0:?} (expected rule or ppo)")]
    UnknownPolicy(String),
    #[error("unknown scenario {0:?} (expected single, stacked, hard_stacked, or blocked)")]
    UnknownScenario(String),
    #[error("suite axis {0:?} is empty")]
    EmptyAxis(&'static str),
}

impl From<crate::rl::RlError> for HarnessError {
    fn from(e: crate::rl::RlError) -> HarnessError {
        HarnessError::Rl(Box::new(e))
    }
}

// ---------- Simulation config ----------

/// Everything one episode needs besides the scene itself. The ToF rate
/// rides in `tof.rate_hz`; the rest of the rates live here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub policy: PolicyConfig,
    pub tof: ToFConfig,
    pub physics: PhysicsConfig,
    /// Master switch for ToF range noise; off makes episodes independent of
    /// the sensor seed entirely.
    pub sensor_noise: bool,
    /// Net blocker displacement (from its pose at ram entry) that counts as
    /// a cleared corridor. The cups sit too high to sweep the blocker fully
    /// off the approach line, so clearance is judged by how far the ram has
    /// shoved it; extraction drag resolves any residual contact.
    pub corridor_clear_displacement: f64,
    pub physics_rate_hz: f64,
    pub vacuum_rate_hz: f64,
    pub control_rate_hz: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            policy: PolicyConfig::default(),
            tof: ToFConfig::default(),
            physics: PhysicsConfig::default(),
            sensor_noise: true,
            corridor_clear_displacement: 0.005,
            physics_rate_hz: 100.0,
            vacuum_rate_hz: 130.0,
            control_rate_hz: 15.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        for rate in [self.physics_rate_hz, self.tof.rate_hz, self.vacuum_rate_hz, self.control_rate_hz] {
            if !(rate > 0.0 && rate <= 1000.0) {
                return Err(HarnessError::BadRate(rate));
            }
        }
        Ok(())
    }

    /// Control ticks allowed before the episode times out.
    pub fn max_control_steps(&self) -> u32 {
        (self.policy.episode_timeout * self.control_rate_hz).round() as u32
    }
}

// ---------- Multi-rate scheduling ----------

/// k-th firing time (1-based) of a subsystem: the first whole millisecond at
/// or after k periods. Rates are capped at 1 kHz, so consecutive fire times
/// always differ and a once-per-millisecond equality check catches each one.
fn fire_ms(rate_hz: f64, k: u64) -> u64 {
    (k as f64 * 1000.0 / rate_hz).ceil() as u64
}

/// Wall-clock seconds between fires k-1 and k.
fn tick_dt(rate_hz: f64, k: u64) -> f64 {
    (fire_ms(rate_hz, k) - fire_ms(rate_hz, k - 1)) as f64 / 1000.0
}

/// Fires completed per subsystem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FireCounts {
    pub physics: u64,
    pub tof: u64,
    pub vacuum: u64,
    pub control: u64,
}

// ---------- Policy drivers ----------

/// One control-rate decision maker. `begin` pins the policy clock to the
/// first control tick; `transitions` drains any phase log for debug output.
pub trait PolicyDriver {
    fn name(&self) -> &str;
    fn begin(&mut self, _t0: f64) {}
    fn tick(&mut self, inputs: &PolicyInputs) -> Result<PolicyOutcome, PolicyError>;
    fn transitions(&mut self) -> Vec<PhaseTransition> {
        Vec::new()
    }
}

/// Dispatches the scenario-appropriate rule strategy.
pub struct RuleDriver {
    kind: ScenarioKind,
    plan: RolePlan,
    state: StrategyState,
    cfg: PolicyConfig,
    start: Phase,
}

impl RuleDriver {
    pub fn new(scene: &Scene, kind: ScenarioKind, cfg: PolicyConfig) -> Result<RuleDriver, PolicyError> {
        let plan = assign_roles(scene)?;
        let start = match kind {
            ScenarioKind::Single | ScenarioKind::Blocked => Phase::Search,
            ScenarioKind::Stacked | ScenarioKind::HardStacked => Phase::Straighten,
        };
        Ok(RuleDriver { kind, plan, state: StrategyState::new(start, 0.0, &cfg), cfg, start })
    }

    pub fn plan(&self) -> &RolePlan {
        &self.plan
    }
}

impl PolicyDriver for RuleDriver {
    fn name(&self) -> &str {
        "rule"
    }

    fn begin(&mut self, t0: f64) {
        self.state = StrategyState::new(self.start, t0, &self.cfg);
    }

    fn tick(&mut self, inputs: &PolicyInputs) -> Result<PolicyOutcome, PolicyError> {
        match self.kind {
            ScenarioKind::Single => single_object_policy(&mut self.state, inputs, &self.plan, &self.cfg),
            ScenarioKind::Stacked | ScenarioKind::HardStacked => {
                stacked_rule_policy(&mut self.state, inputs, &self.plan, &self.cfg)
            }
            ScenarioKind::Blocked => blocked_rule_policy(&mut self.state, inputs, &self.plan, &self.cfg),
        }
    }

    fn transitions(&mut self) -> Vec<PhaseTransition> {
        std::mem::take(&mut self.state.transitions)
    }
}

// ---------- Simulation ----------

/// Live episode state: the scene plus every subsystem the scheduler drives.
/// Policies talk to it only through [`PolicyInputs`] and [`PolicyAction`].
pub struct Simulation {
    pub scene: Scene,
    pub actuators: [ActuatorState; ACTUATOR_COUNT],
    pub ejector: VacuumEjectorState,
    pub frames: [ToFFrame; ACTUATOR_COUNT],
    pub cups: [SuctionCupState; ACTUATOR_COUNT],
    pub grasped: [bool; ACTUATOR_COUNT],
    cfg: SimConfig,
    setpoints: [f64; ACTUATOR_COUNT],
    valve_commands: [bool; ACTUATOR_COUNT],
    t_ms: u64,
    fired: FireCounts,
    bvh: Bvh,
    bvh_dirty: bool,
    rng: ChaCha8Rng,
    target_id: u32,
    blocker_id: Option<u32>,
    /// Blocker centroid captured at the first post-grasp corridor query.
    blocker_ref: Option<Vec3>,
    target_ever_attached: bool,
    dropped_since_control: bool,
}

/// What happened between two control ticks.
#[derive(Debug, Clone, Copy)]
pub struct ControlTickEvents {
    pub t: f64,
    pub dt: f64,
    /// The target lost its attachment at some vacuum tick in the interval.
    pub target_dropped: bool,
}

fn scene_bvh(scene: &Scene) -> Result<Bvh, HarnessError> {
    let meshes = scene.world_meshes();
    let refs: Vec<(u32, &TriangleMesh)> = meshes.iter().map(|(id, m)| (*id, m)).collect();
    Ok(build_bvh(&refs)?)
}

fn blank_frame(tof: &ToFConfig, sensor_id: u8) -> ToFFrame {
    ToFFrame {
        distances: [[tof.max_range; TOF_ZONES]; TOF_ZONES],
        valid: [[false; TOF_ZONES]; TOF_ZONES],
        timestamp: 0.0,
        sensor_id,
    }
}

fn blank_cup(actuator_id: u8) -> SuctionCupState {
    SuctionCupState {
        actuator_id,
        in_contact: false,
        gap: SEAL_PROBE_RANGE,
        contact_angle_deg: 0.0,
        seal_fraction: 0.0,
    }
}

impl Simulation {
    pub fn new(scene: Scene, cfg: SimConfig, sensor_seed: u64) -> Result<Simulation, HarnessError> {
        cfg.validate()?;
        let target_id = scene.target_id()?;
        let blocker_id = scene.objects.iter().find(|o| o.kind == ObjectKind::Blocker).map(|o| o.id);
        let bvh = scene_bvh(&scene)?;
        Ok(Simulation {
            frames: std::array::from_fn(|i| blank_frame(&cfg.tof, i as u8)),
            cups: std::array::from_fn(|i| blank_cup(i as u8)),
            actuators: default_actuators(),
            ejector: VacuumEjectorState::default(),
            grasped: [false; ACTUATOR_COUNT],
            setpoints: [0.0; ACTUATOR_COUNT],
            valve_commands: [false; ACTUATOR_COUNT],
            t_ms: 0,
            fired: FireCounts::default(),
            bvh,
            bvh_dirty: false,
            rng: ChaCha8Rng::seed_from_u64(sensor_seed),
            scene,
            cfg,
            target_id,
            blocker_id,
            blocker_ref: None,
            target_ever_attached: false,
            dropped_since_control: false,
        })
    }

    pub fn time(&self) -> f64 {
        self.t_ms as f64 / 1000.0
    }

    pub fn fire_counts(&self) -> FireCounts {
        self.fired
    }

    pub fn target_id(&self) -> u32 {
        self.target_id
    }

    fn attached_to(&self, actuator_id: u8) -> Option<u32> {
        self.scene.objects.iter().find_map(|o| match o.attachment {
            Attachment::Attached { actuator_id: a, .. } if a == actuator_id => Some(o.id),
            _ => None,
        })
    }

    pub fn target_attached(&self) -> bool {
        self.scene
            .objects
            .iter()
            .any(|o| o.id == self.target_id && matches!(o.attachment, Attachment::Attached { .. }))
    }

    /// Success latch: the target is held and its centroid has left the bin.
    pub fn target_extracted(&self) -> Result<bool, HarnessError> {
        let centroid = self.scene.object(self.target_id)?.centroid();
        Ok(self.target_attached() && !bin_contains(centroid))
    }

    /// Stores the policy's setpoints and valve commands; they take effect at
    /// the physics and vacuum rates respectively (zero-order hold).
    pub fn apply_action(&mut self, action: &PolicyAction) {
        for i in 0..ACTUATOR_COUNT {
            self.setpoints[i] = action.desired_extensions[i].clamp(0.0, self.actuators[i].stroke);
        }
        self.valve_commands = action.valve_commands;
    }

    fn refresh_bvh(&mut self) -> Result<(), HarnessError> {
        if self.bvh_dirty {
            self.bvh = scene_bvh(&self.scene)?;
            self.bvh_dirty = false;
        }
        Ok(())
    }

    fn tips(&self) -> Result<Vec<ActuatorTip>, HarnessError> {
        let base = self.scene.gripper_base_pose;
        let mut tips = Vec::with_capacity(ACTUATOR_COUNT);
        for i in 0..ACTUATOR_COUNT {
            tips.push(ActuatorTip {
                actuator_id: i as u8,
                tip_pose: tip_pose(&base, &self.actuators[i])?,
                tip_radius: CUP_RADIUS,
                suction_engaged: self.attached_to(i as u8).is_some(),
            });
        }
        Ok(tips)
    }

    /// Servo every actuator toward its held setpoint, then advance contact
    /// physics by one step.
    fn physics_tick(&mut self, dt: f64) -> Result<(), HarnessError> {
        for i in 0..ACTUATOR_COUNT {
            let rate = (self.setpoints[i] - self.actuators[i].extension) / dt;
            step_actuator(&mut self.actuators[i], rate, dt)?;
        }
        let tips = self.tips()?;
        let report = step_physics(&mut self.scene, &tips, dt, &self.cfg.physics)?;
        for i in 0..ACTUATOR_COUNT {
            let pushback = report.tip_pushback[i];
            if pushback > 0.0 {
                let a = &mut self.actuators[i];
                a.extension = (a.extension - pushback).clamp(0.0, a.stroke);
            }
        }
        // A popped seal vents the cup to ambient; the station has to
        // re-prime before it can hold anything again.
        for &id in &report.seal_breaks {
            self.ejector.pressures[id as usize] = 0.0;
            self.grasped[id as usize] = false;
        }
        if report.moved_any || report.tip_pushback.iter().any(|p| *p > 0.0) {
            self.bvh_dirty = true;
        }
        self.scene.sim_time = self.time();
        Ok(())
    }

    fn tof_tick(&mut self) -> Result<(), HarnessError> {
        self.refresh_bvh()?;
        let t = self.time();
        let mut tof = self.cfg.tof;
        if !self.cfg.sensor_noise {
            tof.noise_sigma = 0.0;
        }
        let base = self.scene.gripper_base_pose;
        for i in 0..ACTUATOR_COUNT {
            let tip = tip_pose(&base, &self.actuators[i])?;
            let sensor = tip.compose(&Pose::from_translation(Vec3::new(-SENSOR_RECESS, 0.0, 0.0)));
            self.frames[i] = sample_tof(&self.bvh, &sensor, &tof, t, i as u8, &mut self.rng)?;
        }
        Ok(())
    }

    /// Seal evaluation, ejector dynamics, then attachment bookkeeping: a
    /// station that reaches the grasp threshold latches onto whatever its
    /// cup axis touches, and a station that falls below it lets go.
    fn vacuum_tick(&mut self, dt: f64) -> Result<(), HarnessError> {
        self.refresh_bvh()?;
        self.ejector.valve_open = self.valve_commands;
        let base = self.scene.gripper_base_pose;
        let grasp = self.cfg.policy.grasp;
        let mut fractions = [0.0; ACTUATOR_COUNT];
        for i in 0..ACTUATOR_COUNT {
            let tip = tip_pose(&base, &self.actuators[i])?;
            let cup = evaluate_seal(i as u8, &tip, CUP_RADIUS, &self.bvh, &grasp);
            fractions[i] = cup.seal_fraction;
            self.cups[i] = cup;
        }
        step_vacuum(&mut self.ejector, fractions, dt)?;
        for i in 0..ACTUATOR_COUNT {
            self.grasped[i] = is_grasped(&self.ejector, i, &grasp)?;
        }
        for i in 0..ACTUATOR_COUNT {
            let held = self.attached_to(i as u8);
            if self.grasped[i] && held.is_none() {
                self.try_attach(i)?;
            } else if !self.grasped[i] {
                if let Some(id) = held {
                    detach(&mut self.scene, id)?;
                }
            }
        }
        let attached = self.target_attached();
        if attached {
            self.target_ever_attached = true;
        } else if self.target_ever_attached {
            self.dropped_since_control = true;
        }
        Ok(())
    }

    fn try_attach(&mut self, i: usize) -> Result<(), HarnessError> {
        let base = self.scene.gripper_base_pose;
        let tip = tip_pose(&base, &self.actuators[i])?;
        let axis = tip.apply_vector(Vec3::new(1.0, 0.0, 0.0));
        let ray = Ray::new(tip.translation, axis, 1e-9, CUP_RADIUS + SEAL_PROBE_RANGE)?;
        let Some(hit) = self.bvh.raycast(&ray) else { return Ok(()) };
        if (hit.t - CUP_RADIUS).max(0.0) > self.cfg.policy.grasp.seal_gap_max {
            return Ok(());
        }
        let object = self.scene.object(hit.object_id)?;
        if !object.is_movable() || matches!(object.attachment, Attachment::Attached { .. }) {
            return Ok(());
        }
        let tip = ActuatorTip {
            actuator_id: i as u8,
            tip_pose: tip,
            tip_radius: CUP_RADIUS,
            suction_engaged: true,
        };
        attach(&mut self.scene, &tip, hit.object_id, self.cfg.policy.grasp.seal_gap_max)?;
        Ok(())
    }

    /// Blocked scenes only: whether the ram has shoved the blocker far
    /// enough from where it stood when the target was first held.
    fn corridor_clear(&mut self, scenario: ScenarioKind) -> Option<bool> {
        if scenario != ScenarioKind::Blocked {
            return None;
        }
        let Some(id) = self.blocker_id else { return Some(true) };
        if !self.target_attached() {
            return Some(false);
        }
        let centroid = self.scene.object(id).ok()?.centroid();
        let reference = *self.blocker_ref.get_or_insert(centroid);
        Some((centroid - reference).length() >= self.cfg.corridor_clear_displacement)
    }

    /// Runs the master clock up to and including the next control tick.
    /// Subsystems sharing a millisecond fire physics, ToF, vacuum, control.
    pub fn advance_to_control_tick(&mut self) -> Result<ControlTickEvents, HarnessError> {
        loop {
            self.t_ms += 1;
            if fire_ms(self.cfg.physics_rate_hz, self.fired.physics + 1) == self.t_ms {
                self.fired.physics += 1;
                let dt = tick_dt(self.cfg.physics_rate_hz, self.fired.physics);
                self.physics_tick(dt)?;
            }
            if fire_ms(self.cfg.tof.rate_hz, self.fired.tof + 1) == self.t_ms {
                self.fired.tof += 1;
                self.tof_tick()?;
            }
            if fire_ms(self.cfg.vacuum_rate_hz, self.fired.vacuum + 1) == self.t_ms {
                self.fired.vacuum += 1;
                let dt = tick_dt(self.cfg.vacuum_rate_hz, self.fired.vacuum);
                self.vacuum_tick(dt)?;
            }
            if fire_ms(self.cfg.control_rate_hz, self.fired.control + 1) == self.t_ms {
                self.fired.control += 1;
                let events = ControlTickEvents {
                    t: self.time(),
                    dt: tick_dt(self.cfg.control_rate_hz, self.fired.control),
                    target_dropped: self.dropped_since_control,
                };
                self.dropped_since_control = false;
                return Ok(events);
            }
        }
    }
}

// ---------- Episode results ----------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub tilt_deg: f64,
    pub policy: String,
    pub success: bool,
    /// Control ticks consumed.
    pub steps: u32,
    /// Real elapsed seconds; informational only, excluded from equality.
    pub wall_time_s: f64,
    pub failure_reason: Option<FailureReason>,
}

impl PartialEq for EpisodeResult {
    fn eq(&self, other: &EpisodeResult) -> bool {
        self.scenario == other.scenario
            && self.seed == other.seed
            && self.tilt_deg == other.tilt_deg
            && self.policy == other.policy
            && self.success == other.success
            && self.steps == other.steps
            && self.failure_reason == other.failure_reason
    }
}

impl EpisodeResult {
    pub fn to_jsonl_row(&self) -> String {
        serde_json::to_string(self).expect("episode row serializes")
    }
}

// ---------- Episode runner ----------

/// SplitMix64 finalizer; spreads structured keys into well-separated seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene seed for one suite episode. Depends on the cell's scenario and tilt
/// and the episode index, but not the policy: every policy faces the same
/// scenes, so cell rates are directly comparable.
pub fn episode_seed(base: u64, scenario: ScenarioKind, tilt_deg: f64, index: u32) -> u64 {
    let k = mix(base ^ scenario as u64);
    let k = mix(k ^ tilt_deg.to_bits());
    mix(k ^ index as u64)
}

/// Runs one episode on a prebuilt scene. Failures come back as results;
/// `Err` is reserved for broken configuration or simulation invariants.
pub fn run_scene_episode(
    scene: Scene,
    scenario: ScenarioKind,
    tilt_deg: f64,
    seed: u64,
    driver: &mut dyn PolicyDriver,
    cfg: &SimConfig,
    mut debug: Option<&mut Vec<String>>,
) -> Result<EpisodeResult, HarnessError> {
    let started = Instant::now();
    let mut sim = Simulation::new(scene, cfg.clone(), mix(seed))?;
    let max_steps = cfg.max_control_steps();
    let mut steps = 0u32;
    let policy = driver.name().to_string();

    let (success, failure_reason) = loop {
        let events = sim.advance_to_control_tick()?;
        if events.target_dropped {
            break (false, Some(FailureReason::ObjectDropped));
        }
        if steps == 0 {
            driver.begin(events.t);
        }
        steps += 1;
        if sim.target_extracted()? {
            break (true, None);
        }
        let corridor_clear = sim.corridor_clear(scenario);
        let inputs = PolicyInputs {
            t: events.t,
            dt: events.dt,
            frames: &sim.frames,
            actuators: &sim.actuators,
            ejector: &sim.ejector,
            grasped: sim.grasped,
            corridor_clear,
        };
        let outcome = driver.tick(&inputs)?;
        if let Some(rows) = debug.as_deref_mut() {
            log_control_tick(rows, &sim, &events);
        }
        match outcome {
            PolicyOutcome::Continue(action) => sim.apply_action(&action),
            PolicyOutcome::Fail(reason) => break (false, Some(reason)),
        }
        if steps >= max_steps {
            break (false, Some(FailureReason::StepLimit));
        }
    };
    if let Some(rows) = debug {
        for transition in driver.transitions() {
            rows.push(transition.to_jsonl_row());
        }
    }
    Ok(EpisodeResult {
        scenario,
        seed,
        tilt_deg,
        policy,
        success,
        steps,
        wall_time_s: started.elapsed().as_secs_f64(),
        failure_reason,
    })
}

fn log_control_tick(rows: &mut Vec<String>, sim: &Simulation, events: &ControlTickEvents) {
    for frame in &sim.frames {
        rows.push(frame.to_jsonl_row());
    }
    for i in 0..ACTUATOR_COUNT {
        let row = ControlLogRow {
            t: events.t,
            actuator_id: i as u8,
            extension: sim.actuators[i].extension,
            command: sim.setpoints[i],
            d_mean: frame_mean(&sim.frames[i]).ok(),
            pressure: sim.ejector.pressures[i],
            seal_fraction: sim.cups[i].seal_fraction,
            grasped: sim.grasped[i],
        };
        rows.push(row.to_jsonl_row());
    }
}

/// Generates the scene for `spec` and runs it under the rule policy.
pub fn run_rule_episode(spec: &ScenarioSpec, cfg: &SimConfig) -> Result<EpisodeResult, HarnessError> {
    let scene = generate_scenario(spec)?;
    let mut driver = RuleDriver::new(&scene, spec.kind, cfg.policy)?;
    run_scene_episode(scene, spec.kind, spec.target_tilt_deg, spec.rng_seed, &mut driver, cfg, None)
}

// ---------- Labels ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Rule,
    Ppo,
}

pub fn policy_label(policy: PolicyName) -> &'static str {
    match policy {
        PolicyName::Rule => "rule",
        PolicyName::Ppo => "ppo",
    }
}

pub fn parse_policy(name: &str) -> Result<PolicyName, HarnessError> {
    match name {
        "rule" => Ok(PolicyName::Rule),
        "ppo" => Ok(PolicyName::Ppo),
        other => Err(HarnessError::UnknownPolicy(other.to_string())),
    }
}

pub fn scenario_label(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::Single => "single",
        ScenarioKind::Stacked => "stacked",
        ScenarioKind::HardStacked => "hard_stacked",
        ScenarioKind::Blocked => "blocked",
    }
}

pub fn parse_scenario(name: &str) -> Result<ScenarioKind, HarnessError> {
    match name {
        "single" => Ok(ScenarioKind::Single),
        "stacked" => Ok(ScenarioKind::Stacked),
        "hard_stacked" => Ok(ScenarioKind::HardStacked),
        "blocked" => Ok(ScenarioKind::Blocked),
        other => Err(HarnessError::UnknownScenario(other.to_string())),
    }
}

// ---------- Suite sweeps ----------

/// One suite sweep: the Cartesian product of scenarios, tilts, and policies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenarios: Vec<ScenarioKind>,
    pub tilts_deg: Vec<f64>,
    pub policies: Vec<PolicyName>,
    pub episodes_per_cell: u32,
    pub base_seed: u64,
    pub sim: SimConfig,
    pub out_csv: Option<PathBuf>,
    pub episodes_jsonl: Option<PathBuf>,
    pub debug_jsonl: Option<PathBuf>,
    pub ppo_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            scenarios: vec![ScenarioKind::Stacked],
            tilts_deg: vec![0.0],
            policies: vec![PolicyName::Rule],
            episodes_per_cell: 50,
            base_seed: 7,
            sim: SimConfig::default(),
            out_csv: None,
            episodes_jsonl: None,
            debug_jsonl: None,
            ppo_checkpoint: None,
        }
    }
}

/// Aggregate for one (scenario, policy, tilt) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub scenario: ScenarioKind,
    pub policy: String,
    pub tilt_deg: f64,
    pub episodes: u32,
    pub successes: u32,
}

impl SuiteCell {
    pub fn rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub cells: Vec<SuiteCell>,
    pub episodes: Vec<EpisodeResult>,
}

impl SuiteResult {
    pub fn csv(&self) -> String {
        suite_csv(&self.cells)
    }

    pub fn cell(&self, scenario: ScenarioKind, policy: &str, tilt_deg: f64) -> Option<&SuiteCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.policy == policy && c.tilt_deg == tilt_deg)
    }
}

pub fn suite_csv(cells: &[SuiteCell]) -> String {
    let mut out = String::from("scenario,policy,tilt_deg,episodes,successes,rate\n");
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            scenario_label(cell.scenario),
            cell.policy,
            cell.tilt_deg,
            cell.episodes,
            cell.successes,
            cell.rate()
        ));
    }
    out
}

/// Builds the episode driver for one cell. Receives the freshly generated
/// scene so role assignment or recurrent state can key off it.
pub type DriverFactory<'a> =
    dyn FnMut(PolicyName, &Scene, ScenarioKind) -> Result<Box<dyn PolicyDriver>, HarnessError> + 'a;

/// Factory that serves the rule policy and rejects everything else.
pub fn rule_factory(
    cfg: PolicyConfig,
) -> impl FnMut(PolicyName, &Scene, ScenarioKind) -> Result<Box<dyn PolicyDriver>, HarnessError> {
    move |policy, scene, kind| match policy {
        PolicyName::Rule => Ok(Box::new(RuleDriver::new(scene, kind, cfg)?)),
        PolicyName::Ppo => Err(HarnessError::UnknownPolicy("ppo (no checkpoint wired)".into())),
    }
}

/// Runs the whole sweep. Cells run in sorted key order (scenario label,
/// policy label, tilt), so repeated runs of one config are byte-identical.
pub fn run_suite(cfg: &RunConfig, factory: &mut DriverFactory) -> Result<SuiteResult, HarnessError> {
    if cfg.scenarios.is_empty() {
        return Err(HarnessError::EmptyAxis("scenarios"));
    }
    if cfg.tilts_deg.is_empty() {
        return Err(HarnessError::EmptyAxis("tilts_deg"));
    }
    if cfg.policies.is_empty() {
        return Err(HarnessError::EmptyAxis("policies"));
    }
    let mut keys: Vec<(ScenarioKind, PolicyName, f64)> = Vec::new();
    for &scenario in &cfg.scenarios {
        for &policy in &cfg.policies {
            for &tilt in &cfg.tilts_deg {
                keys.push((scenario, policy, tilt));
            }
        }
    }
    keys.sort_by(|a, b| {
        scenario_label(a.0)
            .cmp(scenario_label(b.0))
            .then(policy_label(a.1).cmp(policy_label(b.1)))
            .then(a.2.total_cmp(&b.2))
    });
    keys.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2.to_bits() == b.2.to_bits());

    let mut cells = Vec::with_capacity(keys.len());
    let mut episodes = Vec::new();
    let mut debug_rows: Vec<String> = Vec::new();
    for (scenario, policy, tilt) in keys {
        let mut successes = 0;
        for index in 0..cfg.episodes_per_cell {
            let seed = episode_seed(cfg.base_seed, scenario, tilt, index);
            let spec = ScenarioSpec::new(scenario, tilt, seed);
            let scene = generate_scenario(&spec)?;
            let mut driver = factory(policy, &scene, scenario)?;
            let debug = if cfg.debug_jsonl.is_some() { Some(&mut debug_rows) } else { None };
            let result =
                run_scene_episode(scene, scenario, tilt, seed, driver.as_mut(), &cfg.sim, debug)?;
            if result.success {
                successes += 1;
            }
            episodes.push(result);
        }
        cells.push(SuiteCell {
            scenario,
            policy: policy_label(policy).to_string(),
            tilt_deg: tilt,
            episodes: cfg.episodes_per_cell,
            successes,
        });
    }
    let result = SuiteResult { cells, episodes };
    if let Some(path) = &cfg.out_csv {
        fs::write(path, result.csv())?;
    }
    if let Some(path) = &cfg.episodes_jsonl {
        let mut rows = String::new();
        for episode in &result.episodes {
            rows.push_str(&episode.to_jsonl_row());
            rows.push('\n');
        }
        fs::write(path, rows)?;
    }
    if let Some(path) = &cfg.debug_jsonl {
        fs::write(path, debug_rows.join("\n") + "\n")?;
    }
    Ok(result)
}

// ---------- Tests ----------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gripper::GraspConfig;
    use crate::scene::{SceneObject, GRIPPER_BASE};

    fn quiet_sim() -> SimConfig {
        SimConfig { sensor_noise: false, ..SimConfig::default() }
    }

    /// Scene with only a target box, parked beyond sensor and probe range.
    fn out_of_range_scene() -> Scene {
        let half = Vec3::new(0.03, 0.03, 0.03);
        let pose = Pose::from_translation(Vec3::new(0.55, 0.0, 0.1));
        let target = SceneObject::simple_box(0, ObjectKind::Target, half, pose, 0.2).unwrap();
        Scene {
            objects: vec![target],
            gripper_base_pose: Pose::from_translation(GRIPPER_BASE),
            sim_time: 0.0,
        }
    }

    struct Scripted<F: FnMut(&PolicyInputs) -> PolicyOutcome> {
        f: F,
    }

    impl<F: FnMut(&PolicyInputs) -> PolicyOutcome> PolicyDriver for Scripted<F> {
        fn name(&self) -> &str {
            "scripted"
        }

        fn tick(&mut self, inputs: &PolicyInputs) -> Result<PolicyOutcome, PolicyError> {
            Ok((self.f)(inputs))
        }
    }

    #[test]
    #[ignore]
    fn debug_single_episode() {
        let kind = std::env::var("TG_DEBUG_SCENARIO")
            .ok()
            .map(|s| parse_scenario(&s).unwrap())
            .unwrap_or(ScenarioKind::Single);
        let seed: u64 = std::env::var("TG_DEBUG_SEED")
            .ok()
            .map(|s| s.parse().unwrap())
            .unwrap_or(11);
        let tilt: f64 = std::env::var("TG_DEBUG_TILT")
            .ok()
            .map(|s| s.parse().unwrap())
            .unwrap_or(0.0);
        let spec = ScenarioSpec::new(kind, tilt, seed);
        let scene = generate_scenario(&spec).unwrap();
        let plan = assign_roles(&scene).unwrap();
        println!("plan: {:?}", plan);
        for o in &scene.objects {
            println!(
                "obj {} {:?} centroid=({:.3},{:.3},{:.3}) half=({:.3},{:.3},{:.3})",
                o.id, o.kind, o.centroid().x, o.centroid().y, o.centroid().z,
                o.half_extents.x, o.half_extents.y, o.half_extents.z
            );
        }
        let mut driver = RuleDriver::new(&scene, spec.kind, PolicyConfig::default()).unwrap();
        let mut sim = Simulation::new(scene, quiet_sim(), mix(seed)).unwrap();
        for step in 0..300 {
            let events = sim.advance_to_control_tick().unwrap();
            if step == 0 {
                driver.begin(events.t);
            }
            if sim.target_extracted().unwrap() {
                println!("t={:.3} EXTRACTED", events.t);
                break;
            }
            let corridor_clear = sim.corridor_clear(spec.kind);
            if let Some(id) = sim.blocker_id {
                let c = sim.scene.object(id).unwrap().centroid();
                let yaw = sim.scene.object(id).unwrap().yaw().to_degrees();
                println!(
                    "    blocker=({:.4},{:.4},{:.4}) yaw={:.1} corridor={:?}",
                    c.x, c.y, c.z, yaw, corridor_clear
                );
            }
            let inputs = PolicyInputs {
                t: events.t,
                dt: events.dt,
                frames: &sim.frames,
                actuators: &sim.actuators,
                ejector: &sim.ejector,
                grasped: sim.grasped,
                corridor_clear,
            };
            let outcome = driver.tick(&inputs).unwrap();
            let means: Vec<String> = sim
                .frames
                .iter()
                .map(|f| frame_mean(f).map(|m| format!("{:.3}", m)).unwrap_or("none".into()))
                .collect();
            println!(
                "t={:.3} phase={:?} ext=[{:.3},{:.3},{:.3},{:.3}] mean={:?} p=[{:.1},{:.1},{:.1},{:.1}] seal=[{:.2},{:.2},{:.2},{:.2}] grasp={:?}",
                events.t,
                driver.state.phase,
                sim.actuators[0].extension,
                sim.actuators[1].extension,
                sim.actuators[2].extension,
                sim.actuators[3].extension,
                means,
                sim.ejector.pressures[0],
                sim.ejector.pressures[1],
                sim.ejector.pressures[2],
                sim.ejector.pressures[3],
                sim.cups[0].seal_fraction,
                sim.cups[1].seal_fraction,
                sim.cups[2].seal_fraction,
                sim.cups[3].seal_fraction,
                sim.grasped,
            );
            match outcome {
                PolicyOutcome::Continue(action) => {
                    println!(
                        "    action ext=[{:.3},{:.3},{:.3},{:.3}] valves={:?}",
                        action.desired_extensions[0],
                        action.desired_extensions[1],
                        action.desired_extensions[2],
                        action.desired_extensions[3],
                        action.valve_commands
                    );
                    sim.apply_action(&action);
                }
                PolicyOutcome::Fail(reason) => {
                    println!("t={:.3} FAIL {:?}", events.t, reason);
                    break;
                }
            }
        }
    }

    #[test]
    #[ignore]
    fn survey_rule_rates() {
        let scenarios = std::env::var("TG_SURVEY_SCENARIOS").unwrap_or("single,stacked,blocked".into());
        let tilts = std::env::var("TG_SURVEY_TILTS").unwrap_or("0".into());
        let eps: u32 = std::env::var("TG_SURVEY_EPISODES").ok().and_then(|s| s.parse().ok()).unwrap_or(20);
        let cfg = RunConfig {
            scenarios: scenarios.split(',').map(|s| parse_scenario(s).unwrap()).collect(),
            tilts_deg: tilts.split(',').map(|s| s.parse().unwrap()).collect(),
            policies: vec![PolicyName::Rule],
            episodes_per_cell: eps,
            base_seed: 7,
            ..RunConfig::default()
        };
        let result = run_suite(&cfg, &mut rule_factory(cfg.sim.policy)).unwrap();
        print!("{}", result.csv());
        let mut reasons: std::collections::BTreeMap<String, u32> = Default::default();
        for e in &result.episodes {
            if let Some(r) = e.failure_reason {
                let key = format!("{:?} tilt {} {:?}", e.scenario, e.tilt_deg, r);
                *reasons.entry(key).or_default() += 1;
            }
        }
        for (k, n) in reasons {
            println!("{n:3} x {k}");
        }
    }

    // -- Scheduling --

    #[test]
    fn fire_times_follow_the_ceiling_rule() {
        let physics: Vec<u64> = (1..=3).map(|k| fire_ms(100.0, k)).collect();
        assert_eq!(physics, vec![10, 20, 30]);
        let tof: Vec<u64> = (1..=4).map(|k| fire_ms(15.0, k)).collect();
        assert_eq!(tof, vec![67, 134, 200, 267]);
        let vacuum: Vec<u64> = (1..=10).map(|k| fire_ms(130.0, k)).collect();
        assert_eq!(vacuum, vec![8, 16, 24, 31, 39, 47, 54, 62, 70, 77]);
        // Three ToF periods come out to exactly 200 ms: 67 + 67 + 66.
        assert_eq!(tick_dt(15.0, 1) + tick_dt(15.0, 2) + tick_dt(15.0, 3), 0.2);
    }

    #[test]
    fn one_simulated_second_fires_every_subsystem_at_its_rate() {
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 3);
        let scene = generate_scenario(&spec).unwrap();
        let mut sim = Simulation::new(scene, quiet_sim(), 0).unwrap();
        for _ in 0..15 {
            sim.advance_to_control_tick().unwrap();
        }
        assert_eq!(sim.time(), 1.0);
        let counts = sim.fire_counts();
        assert_eq!(counts.physics, 100);
        assert_eq!(counts.tof, 15);
        assert_eq!(counts.vacuum, 130);
        assert_eq!(counts.control, 15);
    }

    #[test]
    fn sensors_refresh_before_the_policy_reads_them() {
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 3);
        let scene = generate_scenario(&spec).unwrap();
        let mut sim = Simulation::new(scene, quiet_sim(), 0).unwrap();
        let events = sim.advance_to_control_tick().unwrap();
        assert_eq!(events.t, 0.067);
        // The frame read by the first control tick was sampled this instant.
        assert_eq!(sim.frames[0].timestamp, 0.067);
    }

    // -- Episodes --

    #[test]
    fn a_single_object_pick_succeeds_end_to_end() {
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 11);
        let result = run_rule_episode(&spec, &quiet_sim()).unwrap();
        assert!(result.success, "failure: {:?} after {} steps", result.failure_reason, result.steps);
        assert_eq!(result.failure_reason, None);
        assert!(result.steps < 300);
    }

    #[test]
    fn a_stacked_pick_succeeds_end_to_end() {
        let spec = ScenarioSpec::new(ScenarioKind::Stacked, 0.0, 21);
        let result = run_rule_episode(&spec, &quiet_sim()).unwrap();
        assert!(result.success, "failure: {:?} after {} steps", result.failure_reason, result.steps);
    }

    #[test]
    fn a_blocked_pick_rams_then_extracts() {
        let spec = ScenarioSpec::new(ScenarioKind::Blocked, 0.0, 31);
        let result = run_rule_episode(&spec, &quiet_sim()).unwrap();
        assert!(result.success, "failure: {:?} after {} steps", result.failure_reason, result.steps);
    }

    #[test]
    fn an_out_of_range_target_fails_with_no_target_detected() {
        let mut driver =
            RuleDriver::new(&out_of_range_scene(), ScenarioKind::Single, PolicyConfig::default())
                .unwrap();
        let result = run_scene_episode(
            out_of_range_scene(),
            ScenarioKind::Single,
            0.0,
            0,
            &mut driver,
            &quiet_sim(),
            None,
        )
        .unwrap();
        assert!(!result.success);
        assert_eq!(result.failure_reason, Some(FailureReason::NoTargetDetected));
    }

    #[test]
    fn a_closed_valve_drops_the_object_mid_extract() {
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 11);
        let scene = generate_scenario(&spec).unwrap();
        // Press station 0 into the target with the valve open, then cut the
        // vacuum and retract as soon as the grasp latches.
        let mut latched = false;
        let mut driver = Scripted {
            f: |inputs: &PolicyInputs| {
                let mut action = PolicyAction::hold(inputs.actuators);
                if inputs.grasped[0] {
                    latched = true;
                }
                if latched {
                    action.desired_extensions[0] = 0.0;
                    action.valve_commands[0] = false;
                } else {
                    action.desired_extensions[0] = 0.13;
                    action.valve_commands[0] = true;
                }
                PolicyOutcome::Continue(action)
            },
        };
        let result =
            run_scene_episode(scene, ScenarioKind::Single, 0.0, 11, &mut driver, &quiet_sim(), None)
                .unwrap();
        assert!(!result.success);
        assert_eq!(result.failure_reason, Some(FailureReason::ObjectDropped));
    }

    #[test]
    fn a_do_nothing_policy_times_out_at_the_step_limit() {
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 5);
        let scene = generate_scenario(&spec).unwrap();
        let mut driver = Scripted { f: |inputs: &PolicyInputs| PolicyOutcome::Continue(PolicyAction::hold(inputs.actuators)) };
        let result =
            run_scene_episode(scene, ScenarioKind::Single, 0.0, 5, &mut driver, &quiet_sim(), None)
                .unwrap();
        assert!(!result.success);
        assert_eq!(result.failure_reason, Some(FailureReason::StepLimit));
        assert_eq!(result.steps, 300);
    }

    #[test]
    fn the_same_seed_reproduces_the_same_episode() {
        let spec = ScenarioSpec::new(ScenarioKind::Stacked, 10.0, 42);
        let noisy = SimConfig::default();
        let first = run_rule_episode(&spec, &noisy).unwrap();
        let second = run_rule_episode(&spec, &noisy).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.steps, second.steps);
    }

    // -- Corridor oracle --

    #[test]
    fn the_corridor_clears_only_after_the_blocker_moves() {
        let spec = ScenarioSpec::new(ScenarioKind::Blocked, 0.0, 9);
        let scene = generate_scenario(&spec).unwrap();
        let mut sim = Simulation::new(scene, quiet_sim(), 0).unwrap();
        assert_eq!(sim.corridor_clear(ScenarioKind::Single), None);
        assert_eq!(sim.corridor_clear(ScenarioKind::Blocked), Some(false));

        let target_id = sim.target_id();
        sim.scene.object_mut(target_id).unwrap().attachment =
            Attachment::Attached { actuator_id: 0, tip_from_object: Pose::IDENTITY };
        assert_eq!(sim.corridor_clear(ScenarioKind::Blocked), Some(false));

        let blocker_id = sim.blocker_id.unwrap();
        sim.scene.object_mut(blocker_id).unwrap().pose.translation.x += 0.012;
        assert_eq!(sim.corridor_clear(ScenarioKind::Blocked), Some(true));
    }

    // -- Suites --

    fn fail_fast_factory(
    ) -> impl FnMut(PolicyName, &Scene, ScenarioKind) -> Result<Box<dyn PolicyDriver>, HarnessError>
    {
        |_, _, _| {
            Ok(Box::new(Scripted { f: |_: &PolicyInputs| PolicyOutcome::Fail(FailureReason::NoTargetDetected) }))
        }
    }

    #[test]
    fn a_small_suite_writes_sorted_cells_and_every_episode_once() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("suite.csv");
        let jsonl_path = dir.path().join("episodes.jsonl");
        let cfg = RunConfig {
            scenarios: vec![ScenarioKind::Stacked, ScenarioKind::Single],
            tilts_deg: vec![10.0, 0.0],
            policies: vec![PolicyName::Rule],
            episodes_per_cell: 2,
            base_seed: 1,
            out_csv: Some(csv_path.clone()),
            episodes_jsonl: Some(jsonl_path.clone()),
            ..RunConfig::default()
        };
        let result = run_suite(&cfg, &mut fail_fast_factory()).unwrap();

        let labels: Vec<(String, f64)> = result
            .cells
            .iter()
            .map(|c| (scenario_label(c.scenario).to_string(), c.tilt_deg))
            .collect();
        assert_eq!(
            labels,
            vec![
                ("single".into(), 0.0),
                ("single".into(), 10.0),
                ("stacked".into(), 0.0),
                ("stacked".into(), 10.0),
            ]
        );
        assert_eq!(result.episodes.len(), 8);

        let csv = fs::read_to_string(&csv_path).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("scenario,policy,tilt_deg,episodes,successes,rate\n"));
        assert!(csv.contains("single,rule,0,2,0,0\n"));

        let jsonl = fs::read_to_string(&jsonl_path).unwrap();
        assert_eq!(jsonl.lines().count(), 8);
        let mut seeds: Vec<u64> =
            result.episodes.iter().map(|e| e.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 8, "every (cell, index) pair draws its own scene seed");
    }

    #[test]
    fn suite_rates_are_exact_fractions() {
        let cell = SuiteCell {
            scenario: ScenarioKind::Stacked,
            policy: "rule".into(),
            tilt_deg: 30.0,
            episodes: 10,
            successes: 7,
        };
        assert_eq!(cell.rate(), 0.7);
        assert_eq!(suite_csv(&[cell]), "scenario,policy,tilt_deg,episodes,successes,rate\nstacked,rule,30,10,7,0.7\n");
    }

    #[test]
    fn repeated_suites_are_byte_identical() {
        let cfg = RunConfig {
            scenarios: vec![ScenarioKind::Single],
            tilts_deg: vec![0.0],
            policies: vec![PolicyName::Rule],
            episodes_per_cell: 2,
            base_seed: 3,
            ..RunConfig::default()
        };
        let first = run_suite(&cfg, &mut rule_factory(cfg.sim.policy)).unwrap();
        let second = run_suite(&cfg, &mut rule_factory(cfg.sim.policy)).unwrap();
        assert_eq!(first.csv(), second.csv());
        assert_eq!(first.episodes, second.episodes);
    }

    #[test]
    fn episode_seeds_depend_on_the_cell_but_not_the_policy() {
        let a = episode_seed(1, ScenarioKind::Single, 0.0, 0);
        assert_eq!(a, episode_seed(1, ScenarioKind::Single, 0.0, 0));
        assert_ne!(a, episode_seed(1, ScenarioKind::Single, 0.0, 1));
        assert_ne!(a, episode_seed(1, ScenarioKind::Single, 10.0, 0));
        assert_ne!(a, episode_seed(1, ScenarioKind::Stacked, 0.0, 0));
        assert_ne!(a, episode_seed(2, ScenarioKind::Single, 0.0, 0));
    }

    // -- Labels --

    #[test]
    fn labels_round_trip() {
        for kind in [
            ScenarioKind::Single,
            ScenarioKind::Stacked,
            ScenarioKind::HardStacked,
            ScenarioKind::Blocked,
        ] {
            assert_eq!(parse_scenario(scenario_label(kind)).unwrap(), kind);
        }
        for policy in [PolicyName::Rule, PolicyName::Ppo] {
            assert_eq!(parse_policy(policy_label(policy)).unwrap(), policy);
        }
        assert!(parse_scenario("pile").is_err());
        assert!(parse_policy("dqn").is_err());
    }

    // -- Config --

    #[test]
    fn bad_rates_are_rejected() {
        let mut cfg = SimConfig::default();
        cfg.physics_rate_hz = 0.0;
        assert!(matches!(cfg.validate(), Err(HarnessError::BadRate(_))));
        cfg.physics_rate_hz = 2000.0;
        assert!(matches!(cfg.validate(), Err(HarnessError::BadRate(_))));
        let _ = GraspConfig::default();
    }

    #[test]
    fn step_limit_matches_the_episode_timeout() {
        assert_eq!(SimConfig::default().max_control_steps(), 300);
    }
}
