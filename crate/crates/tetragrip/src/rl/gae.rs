//! Rollout storage and generalized advantage estimation.
//!
//! The buffer is laid out env-major: each environment contributes one
//! contiguous sequence of `horizon` steps, which is exactly the unit the
//! recurrent updater replays. `dones[e][t]` marks that the step ended an
//! episode, so the state observed at t+1 belongs to a fresh episode and no
//! value or advantage flows across the boundary.

use super::RlError;

// ---------- Buffer ----------

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden_dim: usize,
    /// [env][t][obs_dim]
    pub obs: Vec<f64>,
    /// [env][t][act_dim]; pre-squash Gaussian draws.
    pub actions: Vec<f64>,
    pub logps: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// [env][t][2*hidden_dim]: the LSTM (h, c) the policy held *before*
    /// consuming obs[t]; sequence replay starts from these.
    pub hiddens: Vec<f64>,
    /// [env]: value estimate for the state after the last stored step.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(
        num_envs: usize,
        horizon: usize,
        obs_dim: usize,
        act_dim: usize,
        hidden_dim: usize,
    ) -> Result<RolloutBuffer, RlError> {
        if num_envs == 0 || horizon == 0 || obs_dim == 0 || act_dim == 0 || hidden_dim == 0 {
            return Err(RlError::BadConfig("rollout buffer dimensions must be nonzero"));
        }
        let n = num_envs * horizon;
        Ok(RolloutBuffer {
            num_envs,
            horizon,
            obs_dim,
            act_dim,
            hidden_dim,
            obs: vec![0.0; n * obs_dim],
            actions: vec![0.0; n * act_dim],
            logps: vec![0.0; n],
            values: vec![0.0; n],
            rewards: vec![0.0; n],
            dones: vec![false; n],
            hiddens: vec![0.0; n * 2 * hidden_dim],
            bootstrap: vec![0.0; num_envs],
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
        })
    }

    pub fn steps(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn idx(&self, env: usize, t: usize) -> usize {
        debug_assert!(env < self.num_envs && t < self.horizon);
        env * self.horizon + t
    }

    pub fn obs_at(&self, env: usize, t: usize) -> &[f64] {
        let i = self.idx(env, t) * self.obs_dim;
        &self.obs[i..i + self.obs_dim]
    }

    pub fn action_at(&self, env: usize, t: usize) -> &[f64] {
        let i = self.idx(env, t) * self.act_dim;
        &self.actions[i..i + self.act_dim]
    }

    /// (h, c) snapshot stored before step (env, t).
    pub fn hidden_at(&self, env: usize, t: usize) -> (&[f64], &[f64]) {
        let i = self.idx(env, t) * 2 * self.hidden_dim;
        (&self.hiddens[i..i + self.hidden_dim], &self.hiddens[i + self.hidden_dim..i + 2 * self.hidden_dim])
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        env: usize,
        t: usize,
        obs: &[f64],
        hidden: (&[f64], &[f64]),
        action: &[f64],
        logp: f64,
        value: f64,
        reward: f64,
        done: bool,
    ) {
        let i = self.idx(env, t);
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
        let hb = i * 2 * self.hidden_dim;
        self.hiddens[hb..hb + self.hidden_dim].copy_from_slice(hidden.0);
        self.hiddens[hb + self.hidden_dim..hb + 2 * self.hidden_dim].copy_from_slice(hidden.1);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(action);
        self.logps[i] = logp;
        self.values[i] = value;
        self.rewards[i] = reward;
        self.dones[i] = done;
    }
}

// ---------- Advantage estimation ----------

/// Fills `advantages` and `returns` in place:
/// delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t,
/// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}, returns = A + V.
/// The value after the last step of each sequence comes from `bootstrap`.
pub fn compute_gae(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64) -> Result<(), RlError> {
    if !(gamma > 0.0 && gamma <= 1.0) || !(lambda > 0.0 && lambda <= 1.0) {
        return Err(RlError::BadConfig("gamma and lambda must lie in (0, 1]"));
    }
    for e in 0..buffer.num_envs {
        let mut a_next = 0.0;
        for t in (0..buffer.horizon).rev() {
            let i = buffer.idx(e, t);
            let not_done = if buffer.dones[i] { 0.0 } else { 1.0 };
            let v_next = if t + 1 < buffer.horizon {
                buffer.values[buffer.idx(e, t + 1)]
            } else {
                buffer.bootstrap[e]
            };
            let delta = buffer.rewards[i] + gamma * v_next * not_done - buffer.values[i];
            a_next = delta + gamma * lambda * not_done * a_next;
            buffer.advantages[i] = a_next;
            buffer.returns[i] = a_next + buffer.values[i];
        }
    }
    Ok(())
}

/// Zero mean, unit variance, in place. A near-constant batch is left
/// centered but unscaled so a degenerate update cannot blow up.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 1e-12 {
            *a /= std;
        }
    }
}

// ---------- Tests ----------
