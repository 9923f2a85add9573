//! The learning environment around the simulator, plus the adapters that let
//! a trained policy run inside the episode harness.
//!
//! One environment step is one control tick: the action becomes servo
//! setpoints, the simulator advances through its physics/sensor/vacuum
//! schedule, and the reward is scored on what moved. Valves are not part of
//! the action space; they open on sensed proximity the same way for training
//! rollouts and harness playback, so the policy only learns where to put the
//! actuators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::gripper::{ActuatorState, ACTUATOR_COUNT};
use crate::harness::{
    HarnessError, PolicyDriver, PolicyName, RuleDriver, SimConfig, Simulation,
};
use crate::policies::{
    assign_roles, lip_gap_estimate, PolicyAction, PolicyError, PolicyInputs, PolicyOutcome,
};
use crate::scene::{bin_contains, generate_scenario, ObjectKind, ScenarioSpec, Scene};
use crate::seal_classifier::{seal_features, Mlp};
use crate::sensors::{boresight_mean, ToFFrame, TOF_ZONES};

use super::net::{squash, Hidden, RecurrentPolicy};
use super::RlError;

// ---------- Observation and action coding ----------

/// Joint positions, one sensor grid, suction flags.
pub const OBS_BASE_LEN: usize = ACTUATOR_COUNT + TOF_ZONES * TOF_ZONES + ACTUATOR_COUNT;

fn obs_len(all_sensors: bool) -> usize {
    let grids = if all_sensors { ACTUATOR_COUNT } else { 1 };
    ACTUATOR_COUNT + grids * TOF_ZONES * TOF_ZONES + ACTUATOR_COUNT
}

/// Builds the observation vector: extensions normalized by stroke, zone
/// distances normalized by max range with invalid zones reading 1, and the
/// per-station suction flags. Every component lies in [0, 1].
pub fn observe(
    actuators: &[ActuatorState; ACTUATOR_COUNT],
    frames: &[ToFFrame; ACTUATOR_COUNT],
    suction: [bool; ACTUATOR_COUNT],
    grasp_id: usize,
    all_sensors: bool,
    max_range: f64,
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(obs_len(all_sensors));
    for a in actuators {
        obs.push((a.extension / a.stroke).clamp(0.0, 1.0));
    }
    let mut push_grid = |frame: &ToFFrame| {
        for row in 0..TOF_ZONES {
            for col in 0..TOF_ZONES {
                if frame.valid[row][col] {
                    obs.push((frame.distances[row][col] / max_range).clamp(0.0, 1.0));
                } else {
                    obs.push(1.0);
                }
            }
        }
    };
    if all_sensors {
        for frame in frames {
            push_grid(frame);
        }
    } else {
        push_grid(&frames[grasp_id]);
    }
    for s in suction {
        obs.push(if s { 1.0 } else { 0.0 });
    }
    obs
}

/// Maps [-1, 1] action components affinely onto [0, stroke]; inputs are
/// clamped first.
pub fn action_to_setpoints(
    action: &[f64],
    actuators: &[ActuatorState; ACTUATOR_COUNT],
) -> [f64; ACTUATOR_COUNT] {
    std::array::from_fn(|i| {
        let a = action[i].clamp(-1.0, 1.0);
        (a + 1.0) * 0.5 * actuators[i].stroke
    })
}

/// Proximity-triggered valves: a station's valve opens while its own sensor
/// estimates the cup lip within `open_gap`, and stays open while the station
/// holds a grasp. The policy never drives valves directly.
pub fn auto_valves(
    frames: &[ToFFrame; ACTUATOR_COUNT],
    grasped: [bool; ACTUATOR_COUNT],
    open_gap: f64,
) -> [bool; ACTUATOR_COUNT] {
    std::array::from_fn(|i| {
        grasped[i]
            || boresight_mean(&frames[i])
                .map(|d| lip_gap_estimate(d) <= open_gap)
                .unwrap_or(false)
    })
}

/// Per-station suction flags through the trained seal classifier instead of
/// the pressure threshold.
pub fn classifier_flags(
    mlp: &Mlp,
    frames: &[ToFFrame; ACTUATOR_COUNT],
    pressures: [f64; ACTUATOR_COUNT],
) -> Result<[bool; ACTUATOR_COUNT], RlError> {
    let mut flags = [false; ACTUATOR_COUNT];
    for i in 0..ACTUATOR_COUNT {
        let features = seal_features(&frames[i], pressures[i]);
        flags[i] = mlp.predict(&features)?.1;
    }
    Ok(flags)
}

// ---------- Environment contract ----------

/// Per-step reward ledger; the step reward is exactly the field sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub suction: f64,
    pub push: f64,
    pub approach: f64,
    pub time: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.suction + self.push + self.approach + self.time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Extraction success; implies `done`.
    pub success: bool,
    /// Simulation time at the end of the tick, seconds.
    pub t: f64,
    /// Present for environments with shaped rewards.
    pub breakdown: Option<RewardBreakdown>,
}

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Starts a fresh episode; deterministic per seed.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, RlError>;
    /// Advances one step. Stepping a finished episode is an error.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, RlError>;
}

// ---------- Reward weights ----------

/// Shaping weights: a one-time bonus for the first tick the target is held,
/// per-meter credit for pushing the top object away from the target and for
/// bringing the target toward the gripper base, and a flat per-step cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_suction: f64,
    pub w_push: f64,
    pub w_approach: f64,
    pub time_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> RewardConfig {
        RewardConfig { w_suction: 1.0, w_push: 2.0, w_approach: 2.0, time_penalty: 0.001 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let ws = [self.w_suction, self.w_push, self.w_approach, self.time_penalty];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RlError::BadConfig("reward weights must be finite and non-negative"));
        }
        Ok(())
    }
}

// ---------- Grasp environment ----------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    /// Episode cap in control ticks; at 15 Hz the default is double the
    /// rule-based timeout.
    pub step_limit: u32,
    /// Feed all four sensor grids instead of the grasp actuator's only.
    pub all_sensors: bool,
    /// Domain randomization: per-episode tilt drawn uniformly, degrees.
    pub tilt_range_deg: [f64; 2],
    /// Route the suction observation through this trained seal classifier
    /// instead of the pressure threshold.
    pub classifier_checkpoint: Option<PathBuf>,
    pub sim: SimConfig,
}

impl Default for EnvConfig {
    fn default() -> EnvConfig {
        EnvConfig {
            reward: RewardConfig::default(),
            step_limit: 600,
            all_sensors: false,
            tilt_range_deg: [0.0, 30.0],
            classifier_checkpoint: None,
            sim: SimConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        self.reward.validate()?;
        if self.step_limit == 0 {
            return Err(RlError::BadConfig("step limit must be positive"));
        }
        let [lo, hi] = self.tilt_range_deg;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(RlError::BadConfig("tilt range must be ordered and finite"));
        }
        Ok(())
    }
}

pub struct GraspEnv {
    cfg: EnvConfig,
    template: ScenarioSpec,
    /// Present on the debug path: `reset` replays this scene instead of
    /// generating one from the template.
    fixed_scene: Option<Scene>,
    classifier: Option<Mlp>,
    sim: Simulation,
    grasp_id: usize,
    top_id: Option<u32>,
    steps: u32,
    done: bool,
    sealed_once: bool,
    prev_top_dist: f64,
    prev_base_dist: f64,
}

impl GraspEnv {
    /// Environment over scenes generated from `template`; the template's own
    /// seed and tilt form the initial episode.
    pub fn new(template: ScenarioSpec, cfg: EnvConfig) -> Result<GraspEnv, RlError> {
        cfg.validate()?;
        let classifier = match &cfg.classifier_checkpoint {
            Some(path) => Some(Mlp::load(path)?),
            None => None,
        };
        let scene = generate_scenario(&template)?;
        let mut env = GraspEnv {
            cfg,
            template,
            fixed_scene: None,
            classifier,
            sim: Simulation::new(scene, SimConfig::default(), 0)?,
            grasp_id: 0,
            top_id: None,
            steps: 0,
            done: false,
            sealed_once: false,
            prev_top_dist: 0.0,
            prev_base_dist: 0.0,
        };
        let spec = env.template.clone();
        env.reset_spec(&spec, spec.rng_seed)?;
        Ok(env)
    }

    /// Environment over one hand-built scene (debug path).
    pub fn from_scene(scene: Scene, cfg: EnvConfig, sensor_seed: u64) -> Result<GraspEnv, RlError> {
        cfg.validate()?;
        let template = ScenarioSpec::new(crate::scene::ScenarioKind::Single, 0.0, sensor_seed);
        let classifier = match &cfg.classifier_checkpoint {
            Some(path) => Some(Mlp::load(path)?),
            None => None,
        };
        let mut env = GraspEnv {
            cfg,
            template,
            fixed_scene: Some(scene.clone()),
            classifier,
            sim: Simulation::new(scene.clone(), SimConfig::default(), 0)?,
            grasp_id: 0,
            top_id: None,
            steps: 0,
            done: false,
            sealed_once: false,
            prev_top_dist: 0.0,
            prev_base_dist: 0.0,
        };
        env.install(scene, sensor_seed)?;
        Ok(env)
    }

    /// Fresh episode from an explicit scenario spec.
    pub fn reset_spec(&mut self, spec: &ScenarioSpec, sensor_seed: u64) -> Result<Vec<f64>, RlError> {
        let scene = generate_scenario(spec)?;
        self.install(scene, sensor_seed)
    }

    fn install(&mut self, scene: Scene, sensor_seed: u64) -> Result<Vec<f64>, RlError> {
        let plan = assign_roles(&scene)?;
        self.grasp_id = plan.grasp_actuator as usize;
        self.top_id = scene.objects.iter().find(|o| o.kind == ObjectKind::Top).map(|o| o.id);
        self.sim = Simulation::new(scene, self.cfg.sim.clone(), sensor_seed)?;
        self.steps = 0;
        self.done = false;
        self.sealed_once = false;
        let target_c = self.sim.scene.object(self.sim.target_id())?.centroid();
        self.prev_base_dist = (target_c - self.sim.scene.gripper_base_pose.translation).length();
        self.prev_top_dist = match self.top_id {
            Some(id) => (self.sim.scene.object(id)?.centroid() - target_c).length(),
            None => 0.0,
        };
        self.observe_now()
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn grasp_actuator(&self) -> usize {
        self.grasp_id
    }

    fn observe_now(&self) -> Result<Vec<f64>, RlError> {
        let flags = match &self.classifier {
            None => self.sim.grasped,
            Some(mlp) => classifier_flags(mlp, &self.sim.frames, self.sim.ejector.pressures)?,
        };
        Ok(observe(
            &self.sim.actuators,
            &self.sim.frames,
            flags,
            self.grasp_id,
            self.cfg.all_sensors,
            self.cfg.sim.tof.max_range,
        ))
    }
}

impl Environment for GraspEnv {
    fn obs_dim(&self) -> usize {
        obs_len(self.cfg.all_sensors)
    }

    fn act_dim(&self) -> usize {
        ACTUATOR_COUNT
    }

    /// Domain-randomized episode: tilt uniform in the configured range, then
    /// scene generation and sensor noise seeded from the same draw. A
    /// fixed-scene env replays its scene with fresh sensor noise instead.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, RlError> {
        if let Some(scene) = self.fixed_scene.clone() {
            return self.install(scene, seed);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [lo, hi] = self.cfg.tilt_range_deg;
        let tilt = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let spec = ScenarioSpec {
            target_tilt_deg: tilt,
            rng_seed: rng.random(),
            ..self.template.clone()
        };
        let sensor_seed = rng.random();
        self.reset_spec(&spec, sensor_seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, RlError> {
        if self.done {
            return Err(RlError::EpisodeOver);
        }
        if action.len() != ACTUATOR_COUNT {
            return Err(RlError::ActionLength { expected: ACTUATOR_COUNT, got: action.len() });
        }
        let desired = action_to_setpoints(action, &self.sim.actuators);
        let valves =
            auto_valves(&self.sim.frames, self.sim.grasped, self.cfg.sim.policy.valve_open_gap);
        self.sim.apply_action(&PolicyAction {
            desired_extensions: desired,
            valve_commands: valves,
        });
        let events = self.sim.advance_to_control_tick()?;
        self.steps += 1;

        let w = self.cfg.reward;
        let mut breakdown = RewardBreakdown { time: -w.time_penalty, ..Default::default() };
        if !self.sealed_once && self.sim.target_attached() {
            self.sealed_once = true;
            breakdown.suction = w.w_suction;
        }
        let target_c = self.sim.scene.object(self.sim.target_id())?.centroid();
        if let Some(id) = self.top_id {
            let d = (self.sim.scene.object(id)?.centroid() - target_c).length();
            breakdown.push = w.w_push * (d - self.prev_top_dist);
            self.prev_top_dist = d;
        }
        let d_base = (target_c - self.sim.scene.gripper_base_pose.translation).length();
        breakdown.approach = w.w_approach * (self.prev_base_dist - d_base);
        self.prev_base_dist = d_base;

        let success = self.sim.target_extracted()?;
        let unreachable = !self.sim.target_attached() && !bin_contains(target_c);
        if success || unreachable || self.steps >= self.cfg.step_limit {
            self.done = true;
        }
        Ok(StepOutcome {
            obs: self.observe_now()?,
            reward: breakdown.total(),
            done: self.done,
            success,
            t: events.t,
            breakdown: Some(breakdown),
        })
    }
}

// ---------- Contextual bandit ----------

/// Two arms per one-hot context, unit reward gap, one step per episode: the
/// smallest environment that exercises the full rollout/update path.
pub struct BanditEnv {
    /// Per state: whether the positive arm pays.
    optimal: Vec<bool>,
    state: usize,
    done: bool,
}

impl BanditEnv {
    pub fn new(n_states: usize, seed: u64) -> Result<BanditEnv, RlError> {
        if n_states == 0 {
            return Err(RlError::BadConfig("bandit needs at least one state"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let optimal = (0..n_states).map(|_| rng.random_bool(0.5)).collect();
        Ok(BanditEnv { optimal, state: 0, done: true })
    }

    pub fn n_states(&self) -> usize {
        self.optimal.len()
    }

    /// Does the positive arm pay in state `s`?
    pub fn optimal_arm_positive(&self, s: usize) -> bool {
        self.optimal[s]
    }

    pub fn obs_of(&self, s: usize) -> Vec<f64> {
        let mut onehot = vec![0.0; self.optimal.len()];
        onehot[s] = 1.0;
        onehot
    }
}

impl Environment for BanditEnv {
    fn obs_dim(&self) -> usize {
        self.optimal.len()
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, RlError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = rng.random_range(0..self.optimal.len());
        self.done = false;
        Ok(self.obs_of(self.state))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, RlError> {
        if self.done {
            return Err(RlError::EpisodeOver);
        }
        if action.len() != 1 {
            return Err(RlError::ActionLength { expected: 1, got: action.len() });
        }
        self.done = true;
        let positive = action[0] > 0.0;
        let paid = positive == self.optimal[self.state];
        Ok(StepOutcome {
            obs: self.obs_of(self.state),
            reward: if paid { 1.0 } else { 0.0 },
            done: true,
            success: paid,
            t: 0.0,
            breakdown: None,
        })
    }
}

// ---------- Harness adapter ----------

/// Runs a trained policy as an episode-harness driver: greedy mean action,
/// proximity valves, hidden state reset at episode start.
pub struct PpoDriver {
    policy: RecurrentPolicy,
    hidden: Hidden,
    grasp_id: usize,
    all_sensors: bool,
    max_range: f64,
    valve_open_gap: f64,
}

impl PpoDriver {
    pub fn new(policy: RecurrentPolicy, scene: &Scene, sim: &SimConfig) -> Result<PpoDriver, RlError> {
        let all_sensors = match policy.dims().obs {
            w if w == obs_len(false) => false,
            w if w == obs_len(true) => true,
            _ => return Err(RlError::BadCheckpoint("observation width fits no sensor layout")),
        };
        if policy.dims().act != ACTUATOR_COUNT {
            return Err(RlError::BadCheckpoint("action width must match the actuator count"));
        }
        let plan = assign_roles(scene)?;
        let hidden = policy.hidden_state();
        Ok(PpoDriver {
            policy,
            hidden,
            grasp_id: plan.grasp_actuator as usize,
            all_sensors,
            max_range: sim.tof.max_range,
            valve_open_gap: sim.policy.valve_open_gap,
        })
    }
}

impl PolicyDriver for PpoDriver {
    fn name(&self) -> &str {
        "ppo"
    }

    fn begin(&mut self, _t0: f64) {
        self.hidden.reset();
    }

    fn tick(&mut self, inputs: &PolicyInputs) -> Result<PolicyOutcome, PolicyError> {
        let obs = observe(
            inputs.actuators,
            inputs.frames,
            inputs.grasped,
            self.grasp_id,
            self.all_sensors,
            self.max_range,
        );
        // The constructor pinned the policy width to this layout.
        let out = self.policy.step(&obs, &mut self.hidden).expect("observation width matches");
        let action = squash(&out.mean);
        Ok(PolicyOutcome::Continue(PolicyAction {
            desired_extensions: action_to_setpoints(&action, inputs.actuators),
            valve_commands: auto_valves(inputs.frames, inputs.grasped, self.valve_open_gap),
        }))
    }
}

/// Suite factory serving both the rule-based driver and a loaded checkpoint.
pub fn checkpoint_factory(
    policy: RecurrentPolicy,
    sim: SimConfig,
) -> impl FnMut(PolicyName, &Scene, crate::scene::ScenarioKind) -> Result<Box<dyn PolicyDriver>, HarnessError>
{
    move |name, scene, kind| match name {
        PolicyName::Rule => Ok(Box::new(RuleDriver::new(scene, kind, sim.policy)?)),
        PolicyName::Ppo => Ok(Box::new(
            PpoDriver::new(policy.clone(), scene, &sim).map_err(HarnessError::from)?,
        )),
    }
}

// ---------- Tests ----------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};
    use crate::scene::{ScenarioKind, SceneObject, GRIPPER_BASE};
    use approx::assert_abs_diff_eq;

    fn quiet_cfg() -> EnvConfig {
        let mut cfg = EnvConfig::default();
        cfg.sim.sensor_noise = false;
        cfg
    }

    fn single_env(seed: u64) -> GraspEnv {
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, seed);
        GraspEnv::new(spec, quiet_cfg()).unwrap()
    }

    /// A bin-free scene whose only object sits beyond sensor range; the
    /// closest thing to an empty world the simulator accepts.
    fn far_target_scene() -> Scene {
        let half = Vec3::new(0.03, 0.03, 0.03);
        let pose = Pose::from_translation(Vec3::new(0.55, 0.0, 0.1));
        let target = SceneObject::simple_box(0, ObjectKind::Target, half, pose, 0.2).unwrap();
        Scene {
            objects: vec![target],
            gripper_base_pose: Pose::from_translation(GRIPPER_BASE),
            sim_time: 0.0,
        }
    }

    fn out_of_bin_scene() -> Scene {
        let half = Vec3::new(0.03, 0.03, 0.03);
        let pose = Pose::from_translation(Vec3::new(0.2, 0.5, 0.1));
        let target = SceneObject::simple_box(0, ObjectKind::Target, half, pose, 0.2).unwrap();
        Scene {
            objects: vec![target],
            gripper_base_pose: Pose::from_translation(GRIPPER_BASE),
            sim_time: 0.0,
        }
    }

    // -- Observation --

    #[test]
    fn a_retracted_start_reads_zero_joints_and_flags() {
        let mut env = single_env(3);
        let obs = env.reset(1).unwrap();
        assert_eq!(obs.len(), OBS_BASE_LEN);
        assert_eq!(env.obs_dim(), OBS_BASE_LEN);
        assert!(obs[..4].iter().all(|&v| v == 0.0), "joints {:?}", &obs[..4]);
        assert!(obs[68..].iter().all(|&v| v == 0.0), "flags {:?}", &obs[68..]);
    }

    #[test]
    fn nothing_in_range_reads_all_ones() {
        let mut env = GraspEnv::from_scene(far_target_scene(), quiet_cfg(), 5).unwrap();
        let obs = env.reset(9).unwrap();
        assert!(obs[4..68].iter().all(|&v| v == 1.0));
        // Still saturated once the sensors have actually fired.
        for _ in 0..3 {
            let out = env.step(&[-1.0; 4]).unwrap();
            assert!(out.obs[4..68].iter().all(|&v| v == 1.0), "{:?}", &out.obs[4..68]);
        }
    }

    #[test]
    fn the_same_seed_replays_the_same_episode() {
        let mut cfg = EnvConfig::default();
        cfg.sim.sensor_noise = true;
        let spec = ScenarioSpec::new(ScenarioKind::Stacked, 0.0, 40);
        let mut a = GraspEnv::new(spec.clone(), cfg.clone()).unwrap();
        let mut b = GraspEnv::new(spec, cfg).unwrap();
        assert_eq!(a.reset(123).unwrap(), b.reset(123).unwrap());
        let action = [0.4, -0.2, 0.1, -0.6];
        let mut first_obs = Vec::new();
        for _ in 0..4 {
            let oa = a.step(&action).unwrap();
            let ob = b.step(&action).unwrap();
            assert_eq!(oa, ob, "twin envs must track bit for bit");
            if first_obs.is_empty() {
                first_obs = oa.obs;
            }
        }
        // A different seed draws a different tilt, scene, and noise stream.
        a.reset(124).unwrap();
        assert_ne!(a.step(&action).unwrap().obs, first_obs);
    }

    #[test]
    fn observations_stay_inside_the_unit_box() {
        let mut env = single_env(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        env.reset(77).unwrap();
        for _ in 0..40 {
            let action: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let out = env.step(&action).unwrap();
            assert!(out.obs.iter().all(|&v| (0.0..=1.0).contains(&v)));
            if out.done {
                break;
            }
        }
    }

    #[test]
    fn the_four_grid_layout_is_wider() {
        let mut cfg = quiet_cfg();
        cfg.all_sensors = true;
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 3);
        let mut env = GraspEnv::new(spec, cfg).unwrap();
        assert_eq!(env.obs_dim(), 4 + 4 * 64 + 4);
        assert_eq!(env.reset(1).unwrap().len(), env.obs_dim());
    }

    #[test]
    fn classifier_driven_flags_stay_binary() {
        let mlp = Mlp::new(
            &[crate::seal_classifier::FEATURE_COUNT, 8, 1],
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let mut env = single_env(4);
        env.classifier = Some(mlp);
        env.reset(5).unwrap();
        let out = env.step(&[0.5; 4]).unwrap();
        assert!(out.obs[68..].iter().all(|&v| v == 0.0 || v == 1.0));
    }

    // -- Stepping and reward --

    #[test]
    fn an_idle_policy_pays_only_the_time_penalty() {
        let mut env = single_env(11);
        env.reset(2).unwrap();
        for _ in 0..5 {
            let out = env.step(&[-1.0; 4]).unwrap();
            assert_eq!(out.reward, -env.cfg.reward.time_penalty);
            let b = out.breakdown.unwrap();
            assert_eq!((b.suction, b.push, b.approach), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn the_suction_bonus_fires_exactly_once() {
        let mut env = single_env(13);
        env.reset(6).unwrap();
        let mut bonuses = 0;
        for _ in 0..120 {
            let out = env.step(&[1.0, 1.0, -1.0, -1.0]).unwrap();
            let b = out.breakdown.unwrap();
            if b.suction != 0.0 {
                assert_eq!(b.suction, env.cfg.reward.w_suction);
                bonuses += 1;
            }
            if out.done {
                break;
            }
        }
        assert_eq!(bonuses, 1, "ramming the face must seal exactly once");
    }

    #[test]
    fn a_rule_driven_replay_succeeds_and_its_ledger_adds_up() {
        let mut env = single_env(17);
        env.reset(3).unwrap();
        let scene = env.sim().scene.clone();
        let mut driver =
            RuleDriver::new(&scene, ScenarioKind::Single, env.cfg.sim.policy).unwrap();
        driver.begin(0.0);

        let mut total = 0.0;
        let mut by_parts = RewardBreakdown::default();
        let mut succeeded = false;
        let mut prev_t = 0.0;
        for _ in 0..200 {
            let inputs = PolicyInputs {
                t: env.sim().time(),
                dt: if prev_t == 0.0 { 1.0 / 15.0 } else { env.sim().time() - prev_t },
                frames: &env.sim.frames,
                actuators: &env.sim.actuators,
                ejector: &env.sim.ejector,
                grasped: env.sim.grasped,
                corridor_clear: None,
            };
            prev_t = env.sim().time();
            let action = match driver.tick(&inputs).unwrap() {
                PolicyOutcome::Continue(a) => a,
                PolicyOutcome::Fail(r) => panic!("rule policy failed with {r:?}"),
            };
            let strokes = &env.sim.actuators;
            let normalized: Vec<f64> = (0..4)
                .map(|i| 2.0 * action.desired_extensions[i].clamp(0.0, strokes[i].stroke) / strokes[i].stroke - 1.0)
                .collect();
            let out = env.step(&normalized).unwrap();
            let b = out.breakdown.unwrap();
            assert_eq!(out.reward, b.total(), "step reward must equal its parts");
            total += out.reward;
            by_parts.suction += b.suction;
            by_parts.push += b.push;
            by_parts.approach += b.approach;
            by_parts.time += b.time;
            if out.done {
                succeeded = out.success;
                break;
            }
        }
        assert!(succeeded, "the rule policy should finish a straight single pick");
        assert_eq!(by_parts.suction, env.cfg.reward.w_suction);
        assert_abs_diff_eq!(total, by_parts.total(), epsilon = 1e-12);
        assert!(total > 0.0, "a successful pick should score positive, got {total}");
    }

    #[test]
    fn stepping_a_finished_episode_is_rejected() {
        let mut cfg = quiet_cfg();
        cfg.step_limit = 2;
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 19);
        let mut env = GraspEnv::new(spec, cfg).unwrap();
        env.reset(1).unwrap();
        assert!(!env.step(&[-1.0; 4]).unwrap().done);
        assert!(env.step(&[-1.0; 4]).unwrap().done);
        assert!(matches!(env.step(&[-1.0; 4]).unwrap_err(), RlError::EpisodeOver));
    }

    #[test]
    fn a_target_outside_the_bin_ends_the_episode_without_success() {
        let mut env = GraspEnv::from_scene(out_of_bin_scene(), quiet_cfg(), 1).unwrap();
        let out = env.step(&[-1.0; 4]).unwrap();
        assert!(out.done);
        assert!(!out.success);
    }

    #[test]
    fn bad_actions_and_configs_are_rejected() {
        let mut env = single_env(23);
        env.reset(1).unwrap();
        assert!(matches!(
            env.step(&[0.0; 3]).unwrap_err(),
            RlError::ActionLength { expected: 4, got: 3 }
        ));
        let mut cfg = EnvConfig::default();
        cfg.reward.w_push = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.tilt_range_deg = [20.0, 10.0];
        assert!(cfg.validate().is_err());
    }

    // -- Valves --

    fn uniform_frame(d: f64) -> ToFFrame {
        ToFFrame {
            distances: [[d; TOF_ZONES]; TOF_ZONES],
            valid: [[true; TOF_ZONES]; TOF_ZONES],
            timestamp: 0.0,
            sensor_id: 0,
        }
    }

    #[test]
    fn valves_open_on_proximity_and_latch_while_grasping() {
        let near = uniform_frame(0.07); // lip gap estimate 5 mm
        let far = uniform_frame(0.20);
        let frames = [near, far.clone(), far.clone(), far];
        let v = auto_valves(&frames, [false; 4], 0.01);
        assert_eq!(v, [true, false, false, false]);
        let v = auto_valves(&frames, [false, false, true, false], 0.01);
        assert_eq!(v, [true, false, true, false]);
    }

    // -- Action mapping --

    #[test]
    fn actions_map_affinely_and_clamp() {
        let acts = crate::gripper::default_actuators();
        let s = acts[0].stroke;
        let sp = action_to_setpoints(&[-1.0, 0.0, 1.0, 2.0], &acts);
        assert_abs_diff_eq!(sp[0], 0.0);
        assert_abs_diff_eq!(sp[1], s / 2.0);
        assert_abs_diff_eq!(sp[2], s);
        assert_abs_diff_eq!(sp[3], s, epsilon = 1e-12);
    }

    // -- Bandit --

    #[test]
    fn the_bandit_pays_the_unit_gap_on_the_right_arm() {
        let mut env = BanditEnv::new(6, 42).unwrap();
        for seed in 0..20 {
            let obs = env.reset(seed).unwrap();
            assert_eq!(obs.len(), 6);
            assert_eq!(obs.iter().sum::<f64>(), 1.0);
            let want_positive = env.optimal_arm_positive(env.state);
            let out = env.step(&[if want_positive { 0.9 } else { -0.9 }]).unwrap();
            assert_eq!(out.reward, 1.0);
            assert!(out.done && out.success);
            assert!(matches!(env.step(&[0.0]).unwrap_err(), RlError::EpisodeOver));
        }
    }

    #[test]
    fn the_bandit_is_deterministic_per_seed() {
        let mut a = BanditEnv::new(9, 7).unwrap();
        let mut b = BanditEnv::new(9, 7).unwrap();
        for seed in 0..10 {
            assert_eq!(a.reset(seed).unwrap(), b.reset(seed).unwrap());
        }
    }

    // -- Harness adapter --

    #[test]
    fn the_driver_is_greedy_and_forgets_between_episodes() {
        let spec = ScenarioSpec::new(ScenarioKind::Stacked, 10.0, 31);
        let scene = generate_scenario(&spec).unwrap();
        let policy = RecurrentPolicy::new(
            crate::rl::NetDims::for_env(OBS_BASE_LEN, ACTUATOR_COUNT),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let sim_cfg = SimConfig::default();
        let mut driver = PpoDriver::new(policy, &scene, &sim_cfg).unwrap();

        let sim = Simulation::new(scene, sim_cfg, 1).unwrap();
        let inputs = PolicyInputs {
            t: 0.0,
            dt: 1.0 / 15.0,
            frames: &sim.frames,
            actuators: &sim.actuators,
            ejector: &sim.ejector,
            grasped: sim.grasped,
            corridor_clear: None,
        };
        driver.begin(0.0);
        let first = match driver.tick(&inputs).unwrap() {
            PolicyOutcome::Continue(a) => a,
            _ => unreachable!(),
        };
        let _ = driver.tick(&inputs).unwrap();
        driver.begin(0.0);
        let again = match driver.tick(&inputs).unwrap() {
            PolicyOutcome::Continue(a) => a,
            _ => unreachable!(),
        };
        assert_eq!(first, again, "begin must reset the recurrent state");
    }

    #[test]
    fn a_checkpoint_with_an_alien_width_is_rejected() {
        let spec = ScenarioSpec::new(ScenarioKind::Single, 0.0, 2);
        let scene = generate_scenario(&spec).unwrap();
        let policy = RecurrentPolicy::new(
            crate::rl::NetDims { obs: 9, act: 4, embed: 8, hidden: 4 },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let err = match PpoDriver::new(policy, &scene, &SimConfig::default()) {
            Err(e) => e,
            Ok(_) => panic!("an alien checkpoint width must be rejected"),
        };
        assert!(matches!(err, RlError::BadCheckpoint(_)));
    }
}
