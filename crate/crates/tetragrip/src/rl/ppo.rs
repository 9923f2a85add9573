//! Clipped-surrogate policy optimization over whole recurrent sequences.
//!
//! Rollouts are collected time-major from a fixed set of environments; each
//! update replays entire per-env sequences from their stored hidden-state
//! snapshots so gradients flow through the recurrence, never across episode
//! boundaries. Minibatches are sequences, not shuffled steps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scene::ScenarioSpec;

use super::env::{EnvConfig, Environment, GraspEnv};
use super::gae::{compute_gae, normalize_advantages, RolloutBuffer};
use super::net::{
    gaussian_entropy, gaussian_logp, gaussian_sample, squash, Hidden, NetDims, RecurrentPolicy,
};
use super::RlError;

// ---------- Configuration ----------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub epochs_per_update: u32,
    /// Sequences per minibatch; a minibatch is whole env-horizon sequences.
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Steps collected per env per update.
    pub horizon: usize,
    pub num_envs: usize,
    pub total_updates: u32,
    pub rng_seed: u64,
}

impl Default for PpoConfig {
    fn default() -> PpoConfig {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            epochs_per_update: 4,
            minibatch_size: 2,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            horizon: 64,
            num_envs: 4,
            total_updates: 300,
            rng_seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(RlError::BadConfig("gamma must lie in (0, 1]"));
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return Err(RlError::BadConfig("gae_lambda must lie in (0, 1]"));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon.is_finite()) {
            return Err(RlError::BadConfig("clip_epsilon must be positive"));
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 {
            return Err(RlError::BadConfig("epochs and minibatch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RlError::BadConfig("learning rate must be positive"));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(RlError::BadConfig("loss coefficients must be non-negative"));
        }
        if self.horizon == 0 || self.num_envs == 0 {
            return Err(RlError::BadConfig("horizon and num_envs must be positive"));
        }
        Ok(())
    }
}

// ---------- Optimizer ----------

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Global gradient-norm ceiling applied before every step.
const GRAD_CLIP: f64 = 0.5;

/// Adam with bias correction; one slot per parameter.
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize) -> Adam {
        Adam { m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0 }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + ADAM_EPS);
        }
    }
}

/// Scales `grad` so its Euclidean norm is at most `max`; returns the
/// pre-clip norm.
fn clip_global_norm(grad: &mut [f64], max: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max {
        let s = max / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

// ---------- Rollout collection ----------

struct EnvSlot {
    hidden: Hidden,
    last_obs: Vec<f64>,
    episode_return: f64,
}

/// Fills the buffer time-major, sampling pre-squash actions and resetting
/// env and hidden state whenever an episode ends. Finished-episode returns
/// land in `completed`. Bootstrap values peek one step ahead on a cloned
/// hidden state so collection state is undisturbed.
fn collect_rollouts(
    policy: &RecurrentPolicy,
    envs: &mut [Box<dyn Environment>],
    slots: &mut [EnvSlot],
    buffer: &mut RolloutBuffer,
    act_rng: &mut ChaCha8Rng,
    seed_rng: &mut ChaCha8Rng,
    completed: &mut Vec<f64>,
) -> Result<(), RlError> {
    for t in 0..buffer.horizon {
        for e in 0..envs.len() {
            let slot = &mut slots[e];
            let snap = slot.hidden.clone();
            let out = policy.step(&slot.last_obs, &mut slot.hidden)?;
            let u = gaussian_sample(&out.mean, policy.log_std(), act_rng);
            let logp = gaussian_logp(&u, &out.mean, policy.log_std());
            let action = squash(&u);
            let step = envs[e].step(&action)?;
            slot.episode_return += step.reward;
            buffer.record(
                e,
                t,
                &slot.last_obs,
                (&snap.h, &snap.c),
                &u,
                logp,
                out.value,
                step.reward,
                step.done,
            );
            if step.done {
                completed.push(slot.episode_return);
                slot.episode_return = 0.0;
                slot.last_obs = envs[e].reset(seed_rng.random())?;
                slot.hidden.reset();
            } else {
                slot.last_obs = step.obs;
            }
        }
    }
    for (e, slot) in slots.iter().enumerate() {
        buffer.bootstrap[e] = if buffer.dones[buffer.idx(e, buffer.horizon - 1)] {
            0.0
        } else {
            let mut peek = slot.hidden.clone();
            policy.step(&slot.last_obs, &mut peek)?.value
        };
    }
    Ok(())
}

// ---------- Surrogate loss ----------

struct MbStats {
    loss: f64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    clipped: usize,
    samples: usize,
}

/// Replays the chosen sequences under current parameters and accumulates the
/// gradient of
///   mean[-min(rho*A, clip(rho)*A) + value_coef*(V-R)^2/2] - entropy_coef*H
/// into `grad`. The clipped branch is flat, so policy gradient flows only
/// where the unclipped branch is active.
fn minibatch_loss_and_grad(
    policy: &RecurrentPolicy,
    buffer: &RolloutBuffer,
    chunk: &[usize],
    cfg: &PpoConfig,
    grad: &mut [f64],
) -> Result<MbStats, RlError> {
    let n = (chunk.len() * buffer.horizon) as f64;
    let sigmas: Vec<f64> = policy.log_std().iter().map(|ls| ls.exp()).collect();
    let entropy = gaussian_entropy(policy.log_std());
    let ls_range = policy.log_std_range();
    let clip_lo = 1.0 - cfg.clip_epsilon;
    let clip_hi = 1.0 + cfg.clip_epsilon;

    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut clipped = 0;
    for &e in chunk {
        let (h0, c0) = buffer.hidden_at(e, 0);
        let mut hid = Hidden { h: h0.to_vec(), c: c0.to_vec() };
        let mut caches = Vec::with_capacity(buffer.horizon);
        let mut resets = Vec::with_capacity(buffer.horizon);
        let mut dmean = Vec::with_capacity(buffer.horizon);
        let mut dvalue = vec![0.0; buffer.horizon];
        for t in 0..buffer.horizon {
            let boundary = t == 0 || buffer.dones[buffer.idx(e, t - 1)];
            if t > 0 && boundary {
                hid.reset();
            }
            let (out, cache) = policy.step_cached(buffer.obs_at(e, t), &mut hid)?;
            resets.push(boundary);

            let i = buffer.idx(e, t);
            let u = buffer.action_at(e, t);
            let logp = gaussian_logp(u, &out.mean, policy.log_std());
            let ratio = (logp - buffer.logps[i]).exp();
            let adv = buffer.advantages[i];
            policy_loss -= (ratio * adv).min(ratio.clamp(clip_lo, clip_hi) * adv);
            if (ratio - 1.0).abs() > cfg.clip_epsilon {
                clipped += 1;
            }

            let verr = out.value - buffer.returns[i];
            value_loss += 0.5 * verr * verr;
            dvalue[t] = cfg.value_coef * verr / n;

            let mut dm = vec![0.0; buffer.act_dim];
            let active = (adv >= 0.0 && ratio <= clip_hi) || (adv < 0.0 && ratio >= clip_lo);
            if active {
                let c = -adv * ratio / n;
                for j in 0..buffer.act_dim {
                    let z = (u[j] - out.mean[j]) / sigmas[j];
                    dm[j] = c * z / sigmas[j];
                    grad[ls_range.start + j] += c * (z * z - 1.0);
                }
            }
            dmean.push(dm);
            caches.push(cache);
        }
        policy.backward_sequence(&caches, &resets, &dmean, &dvalue, grad);
    }
    for g in &mut grad[ls_range] {
        *g -= cfg.entropy_coef;
    }

    Ok(MbStats {
        loss: policy_loss / n + cfg.value_coef * value_loss / n - cfg.entropy_coef * entropy,
        policy_loss: policy_loss / n,
        value_loss: value_loss / n,
        entropy,
        clipped,
        samples: chunk.len() * buffer.horizon,
    })
}

// ---------- Update ----------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of samples whose ratio left the clip band.
    pub clip_fraction: f64,
}

/// One optimization round: normalizes the buffer's advantages in place, then
/// runs the configured epochs over shuffled whole-sequence minibatches. A
/// non-finite loss aborts before touching the parameters.
pub fn ppo_update<R: Rng>(
    policy: &mut RecurrentPolicy,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    opt: &mut Adam,
    update: u32,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    cfg.validate()?;
    normalize_advantages(&mut buffer.advantages);

    let mut order: Vec<usize> = (0..buffer.num_envs).collect();
    let mut grad = vec![0.0; policy.param_count()];
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    let mut minibatches = 0u32;
    let mut clipped = 0usize;
    let mut samples = 0usize;
    for epoch in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for (mb, chunk) in order.chunks(cfg.minibatch_size).enumerate() {
            grad.fill(0.0);
            let stats = minibatch_loss_and_grad(policy, buffer, chunk, cfg, &mut grad)?;
            if !stats.loss.is_finite() {
                return Err(RlError::NonFiniteLoss {
                    value: stats.loss,
                    update,
                    epoch,
                    minibatch: mb as u32,
                });
            }
            clip_global_norm(&mut grad, GRAD_CLIP);
            opt.apply(policy.params_mut(), &grad, cfg.learning_rate);
            sums.0 += stats.loss;
            sums.1 += stats.policy_loss;
            sums.2 += stats.value_loss;
            sums.3 += stats.entropy;
            clipped += stats.clipped;
            samples += stats.samples;
            minibatches += 1;
        }
    }
    let k = minibatches as f64;
    Ok(UpdateStats {
        loss: sums.0 / k,
        policy_loss: sums.1 / k,
        value_loss: sums.2 / k,
        entropy: sums.3 / k,
        clip_fraction: clipped as f64 / samples as f64,
    })
}

// ---------- Training loop ----------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: u32,
    /// Mean return of episodes finished during this update's rollout;
    /// carries the previous value forward when none finished.
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("update,mean_reward,clip_fraction,entropy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.update, r.mean_reward, r.clip_fraction, r.entropy
        ));
    }
    out
}

pub struct TrainRun {
    pub policy: RecurrentPolicy,
    pub curve: Vec<CurveRow>,
}

/// Full training run starting from `policy`. All randomness (action noise,
/// episode seeds, minibatch order) derives from `cfg.rng_seed`, so two runs
/// with the same inputs produce identical parameters and curves.
pub fn train(
    policy: RecurrentPolicy,
    envs: &mut [Box<dyn Environment>],
    cfg: &PpoConfig,
) -> Result<TrainRun, RlError> {
    cfg.validate()?;
    if envs.len() != cfg.num_envs {
        return Err(RlError::BadConfig("env count must match num_envs"));
    }
    let obs_dim = envs[0].obs_dim();
    let act_dim = envs[0].act_dim();
    if envs.iter().any(|e| e.obs_dim() != obs_dim || e.act_dim() != act_dim) {
        return Err(RlError::BadConfig("envs disagree on observation or action width"));
    }
    if policy.dims().obs != obs_dim || policy.dims().act != act_dim {
        return Err(RlError::BadConfig("policy dimensions do not match the envs"));
    }
    let mut policy = policy;

    let mut act_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x5851_f42d_4c95_7f2d);

    let mut slots = Vec::with_capacity(envs.len());
    for env in envs.iter_mut() {
        slots.push(EnvSlot {
            hidden: policy.hidden_state(),
            last_obs: env.reset(seed_rng.random())?,
            episode_return: 0.0,
        });
    }

    let mut opt = Adam::new(policy.param_count());
    let mut curve = Vec::with_capacity(cfg.total_updates as usize);
    let mut mean_reward = 0.0;
    for update in 0..cfg.total_updates {
        let mut buffer =
            RolloutBuffer::new(cfg.num_envs, cfg.horizon, obs_dim, act_dim, policy.dims().hidden)?;
        let mut completed = Vec::new();
        collect_rollouts(
            &policy,
            envs,
            &mut slots,
            &mut buffer,
            &mut act_rng,
            &mut seed_rng,
            &mut completed,
        )?;
        compute_gae(&mut buffer, cfg.gamma, cfg.gae_lambda)?;
        let stats = ppo_update(&mut policy, &mut buffer, cfg, &mut opt, update, &mut shuffle_rng)?;
        if !completed.is_empty() {
            mean_reward = completed.iter().sum::<f64>() / completed.len() as f64;
        }
        log::debug!(
            "update {update}: reward {mean_reward:.4} loss {:.4} clip {:.3} entropy {:.3}",
            stats.loss,
            stats.clip_fraction,
            stats.entropy
        );
        curve.push(CurveRow {
            update,
            mean_reward,
            clip_fraction: stats.clip_fraction,
            entropy: stats.entropy,
        });
    }
    Ok(TrainRun { policy, curve })
}

/// Trains a fresh policy on simulator environments stamped from one scenario
/// template.
pub fn train_grasp(
    template: &ScenarioSpec,
    env_cfg: &EnvConfig,
    cfg: &PpoConfig,
) -> Result<TrainRun, RlError> {
    cfg.validate()?;
    let mut envs: Vec<Box<dyn Environment>> = Vec::with_capacity(cfg.num_envs);
    for _ in 0..cfg.num_envs {
        envs.push(Box::new(GraspEnv::new(template.clone(), env_cfg.clone())?));
    }
    let dims = NetDims::for_env(envs[0].obs_dim(), envs[0].act_dim());
    let policy = RecurrentPolicy::new(dims, &mut ChaCha8Rng::seed_from_u64(cfg.rng_seed))?;
    train(policy, &mut envs, cfg)
}

// ---------- Evaluation ----------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Greedy rollouts (squashed mean action, no sampling), one per seed.
pub fn evaluate(
    policy: &RecurrentPolicy,
    env: &mut dyn Environment,
    seeds: &[u64],
) -> Result<EvalStats, RlError> {
    if seeds.is_empty() {
        return Err(RlError::BadConfig("evaluation needs at least one seed"));
    }
    let mut total = 0.0;
    let mut successes = 0usize;
    for &seed in seeds {
        let mut obs = env.reset(seed)?;
        let mut hid = policy.hidden_state();
        loop {
            let out = policy.step(&obs, &mut hid)?;
            let step = env.step(&squash(&out.mean))?;
            total += step.reward;
            if step.done {
                if step.success {
                    successes += 1;
                }
                break;
            }
            obs = step.obs;
        }
    }
    Ok(EvalStats {
        mean_return: total / seeds.len() as f64,
        success_rate: successes as f64 / seeds.len() as f64,
    })
}

// ---------- Tests ----------
