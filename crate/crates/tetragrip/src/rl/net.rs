//! Policy network: a two-layer tanh embedding feeding one LSTM cell, with a
//! Gaussian actor head (state-independent log-std), a scalar value head, and
//! exact backpropagation through time.
//!
//! Parameters live in one flat `Vec<f64>` so the optimizer, the gradient
//! buffer, and finite-difference probes all share the same indexing. The
//! layout is fixed by `Layout` and serialized tensor-by-tensor through
//! `ParamStore`, the same flat-JSON format the seal classifier uses.

use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::params::ParamStore;

use super::RlError;

// ---------- Dimensions and parameter layout ----------

pub const LN_2PI: f64 = 1.8378770664093453;

/// Initial log standard deviation of the actor head (sigma ~ 0.5).
const LOG_STD_INIT: f64 = -0.7;
/// Forget-gate bias offset; starts the cell remembering.
const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub obs: usize,
    pub act: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl NetDims {
    /// Default sizing for the grasping environment: big enough to learn,
    /// small enough to train on a single CPU core.
    pub fn for_env(obs: usize, act: usize) -> NetDims {
        NetDims { obs, act, embed: 128, hidden: 64 }
    }

    fn validate(&self) -> Result<(), RlError> {
        if self.obs == 0 || self.act == 0 || self.embed == 0 || self.hidden == 0 {
            return Err(RlError::BadConfig("network dimensions must be nonzero"));
        }
        Ok(())
    }
}

/// Flat-vector spans of every tensor, in declaration order. Gate rows in the
/// LSTM blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone)]
struct Layout {
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    wx: Range<usize>,
    wh: Range<usize>,
    bl: Range<usize>,
    wa: Range<usize>,
    ba: Range<usize>,
    wv: Range<usize>,
    bv: Range<usize>,
    log_std: Range<usize>,
    total: usize,
}

fn layout(d: &NetDims) -> Layout {
    let mut off = 0;
    let mut slot = |len: usize| {
        let r = off..off + len;
        off += len;
        r
    };
    let (e, h, g) = (d.embed, d.hidden, 4 * d.hidden);
    Layout {
        w1: slot(e * d.obs),
        b1: slot(e),
        w2: slot(e * e),
        b2: slot(e),
        wx: slot(g * e),
        wh: slot(g * h),
        bl: slot(g),
        wa: slot(d.act * h),
        ba: slot(d.act),
        wv: slot(h),
        bv: slot(1),
        log_std: slot(d.act),
        total: off,
    }
}

// ---------- Dense kernels ----------

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// out += W x, W row-major with x.len() columns.
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(x.len())) {
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o += acc;
    }
}

/// dW += dz xᵀ.
fn outer_acc(dz: &[f64], x: &[f64], dw: &mut [f64]) {
    for (dzi, row) in dz.iter().zip(dw.chunks_exact_mut(x.len())) {
        for (d, xi) in row.iter_mut().zip(x) {
            *d += dzi * xi;
        }
    }
}

/// dx += Wᵀ dz, W row-major dz.len() x dx.len().
fn matvec_t_acc(w: &[f64], dz: &[f64], dx: &mut [f64]) {
    for (dzi, row) in dz.iter().zip(w.chunks_exact(dx.len())) {
        for (d, wi) in dx.iter_mut().zip(row) {
            *d += dzi * wi;
        }
    }
}

// ---------- Recurrent state ----------

#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Hidden {
    pub fn zeros(hidden: usize) -> Hidden {
        Hidden { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }

    /// Episode boundary: forget everything.
    pub fn reset(&mut self) {
        self.h.fill(0.0);
        self.c.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOut {
    pub mean: Vec<f64>,
    pub value: f64,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub(super) struct StepCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gi: Vec<f64>,
    gf: Vec<f64>,
    gg: Vec<f64>,
    go: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    pub(super) h: Vec<f64>,
}

// ---------- Policy ----------

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentPolicy {
    dims: NetDims,
    params: Vec<f64>,
}

impl RecurrentPolicy {
    /// Glorot-uniform weights, zero biases except the forget gate, actor
    /// head scaled down so the initial action mean is near zero.
    pub fn new<R: Rng>(dims: NetDims, rng: &mut R) -> Result<RecurrentPolicy, RlError> {
        dims.validate()?;
        let l = layout(&dims);
        let mut params = vec![0.0; l.total];
        let draw = |params: &mut Vec<f64>, range: Range<usize>, fan_in: usize, fan_out: usize, scale: f64, rng: &mut R| {
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt() * scale;
            for p in &mut params[range] {
                *p = rng.random_range(-lim..lim);
            }
        };
        draw(&mut params, l.w1.clone(), dims.obs, dims.embed, 1.0, rng);
        draw(&mut params, l.w2.clone(), dims.embed, dims.embed, 1.0, rng);
        draw(&mut params, l.wx.clone(), dims.embed, dims.hidden, 1.0, rng);
        draw(&mut params, l.wh.clone(), dims.hidden, dims.hidden, 1.0, rng);
        draw(&mut params, l.wa.clone(), dims.hidden, dims.act, 0.01, rng);
        draw(&mut params, l.wv.clone(), dims.hidden, 1, 1.0, rng);
        params[l.bl.clone()][dims.hidden..2 * dims.hidden].fill(FORGET_BIAS);
        params[l.log_std].fill(LOG_STD_INIT);
        Ok(RecurrentPolicy { dims, params })
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[layout(&self.dims).log_std]
    }

    pub(super) fn log_std_range(&self) -> Range<usize> {
        layout(&self.dims).log_std
    }

    pub fn hidden_state(&self) -> Hidden {
        Hidden::zeros(self.dims.hidden)
    }

    /// One control-tick evaluation: advances `hid` in place and returns the
    /// action mean and state value.
    pub fn step(&self, x: &[f64], hid: &mut Hidden) -> Result<StepOut, RlError> {
        let (out, _) = self.step_cached(x, hid)?;
        Ok(out)
    }

    pub(super) fn step_cached(
        &self,
        x: &[f64],
        hid: &mut Hidden,
    ) -> Result<(StepOut, StepCache), RlError> {
        if x.len() != self.dims.obs {
            return Err(RlError::ObsLength { expected: self.dims.obs, got: x.len() });
        }
        let d = &self.dims;
        let l = layout(d);
        let p = &self.params;

        let mut a1 = p[l.b1.clone()].to_vec();
        matvec_acc(&p[l.w1.clone()], x, &mut a1);
        a1.iter_mut().for_each(|v| *v = v.tanh());

        let mut a2 = p[l.b2.clone()].to_vec();
        matvec_acc(&p[l.w2.clone()], &a1, &mut a2);
        a2.iter_mut().for_each(|v| *v = v.tanh());

        let mut z = p[l.bl.clone()].to_vec();
        matvec_acc(&p[l.wx.clone()], &a2, &mut z);
        matvec_acc(&p[l.wh.clone()], &hid.h, &mut z);
        let h = d.hidden;
        let gi: Vec<f64> = z[0..h].iter().map(|&v| sigmoid(v)).collect();
        let gf: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let gg: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let go: Vec<f64> = z[3 * h..4 * h].iter().map(|&v| sigmoid(v)).collect();

        let h_prev = hid.h.clone();
        let c_prev = hid.c.clone();
        let c: Vec<f64> =
            (0..h).map(|k| gf[k] * c_prev[k] + gi[k] * gg[k]).collect();
        let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let hn: Vec<f64> = (0..h).map(|k| go[k] * tc[k]).collect();

        let mut mean = p[l.ba.clone()].to_vec();
        matvec_acc(&p[l.wa.clone()], &hn, &mut mean);
        let mut value = p[l.bv.clone()][0];
        for (wi, hi) in p[l.wv.clone()].iter().zip(&hn) {
            value += wi * hi;
        }

        hid.h.copy_from_slice(&hn);
        hid.c.copy_from_slice(&c);
        let out = StepOut { mean, value };
        let cache = StepCache {
            x: x.to_vec(),
            a1,
            a2,
            h_prev,
            c_prev,
            gi,
            gf,
            gg,
            go,
            c,
            tc,
            h: hn,
        };
        Ok((out, cache))
    }

    /// Accumulates dJ/dparams into `grad` for one forward sequence, given
    /// per-step gradients on the action mean and the value. `resets[t]` marks
    /// steps whose incoming hidden state was zeroed (episode boundaries);
    /// nothing propagates across them. `grad` must span the full layout; the
    /// log-std span is left untouched because it feeds no step output.
    pub(super) fn backward_sequence(
        &self,
        caches: &[StepCache],
        resets: &[bool],
        dmean: &[Vec<f64>],
        dvalue: &[f64],
        grad: &mut [f64],
    ) {
        assert_eq!(caches.len(), resets.len());
        assert_eq!(caches.len(), dmean.len());
        assert_eq!(caches.len(), dvalue.len());
        assert_eq!(grad.len(), self.params.len());
        let d = &self.dims;
        let l = layout(d);
        let p = &self.params;
        let h = d.hidden;

        let mut dh = vec![0.0; h];
        let mut dc = vec![0.0; h];
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];

            // Head contributions.
            outer_acc(&dmean[t], &cache.h, &mut grad[l.wa.clone()]);
            for (g, dm) in grad[l.ba.clone()].iter_mut().zip(&dmean[t]) {
                *g += dm;
            }
            matvec_t_acc(&p[l.wa.clone()], &dmean[t], &mut dh);
            for (g, hi) in grad[l.wv.clone()].iter_mut().zip(&cache.h) {
                *g += dvalue[t] * hi;
            }
            grad[l.bv.clone()][0] += dvalue[t];
            for (dhi, wi) in dh.iter_mut().zip(p[l.wv.clone()].iter()) {
                *dhi += dvalue[t] * wi;
            }

            // LSTM cell.
            let mut dz = vec![0.0; 4 * h];
            for k in 0..h {
                let do_ = dh[k] * cache.tc[k];
                let dtc = dh[k] * cache.go[k] * (1.0 - cache.tc[k] * cache.tc[k]) + dc[k];
                let di = dtc * cache.gg[k];
                let df = dtc * cache.c_prev[k];
                let dg = dtc * cache.gi[k];
                dc[k] = dtc * cache.gf[k];
                dz[k] = di * cache.gi[k] * (1.0 - cache.gi[k]);
                dz[h + k] = df * cache.gf[k] * (1.0 - cache.gf[k]);
                dz[2 * h + k] = dg * (1.0 - cache.gg[k] * cache.gg[k]);
                dz[3 * h + k] = do_ * cache.go[k] * (1.0 - cache.go[k]);
            }
            outer_acc(&dz, &cache.a2, &mut grad[l.wx.clone()]);
            outer_acc(&dz, &cache.h_prev, &mut grad[l.wh.clone()]);
            for (g, dzi) in grad[l.bl.clone()].iter_mut().zip(&dz) {
                *g += dzi;
            }

            // Embedding.
            let mut da2 = vec![0.0; d.embed];
            matvec_t_acc(&p[l.wx.clone()], &dz, &mut da2);
            let dz2: Vec<f64> =
                da2.iter().zip(&cache.a2).map(|(dv, a)| dv * (1.0 - a * a)).collect();
            outer_acc(&dz2, &cache.a1, &mut grad[l.w2.clone()]);
            for (g, dzi) in grad[l.b2.clone()].iter_mut().zip(&dz2) {
                *g += dzi;
            }
            let mut da1 = vec![0.0; d.embed];
            matvec_t_acc(&p[l.w2.clone()], &dz2, &mut da1);
            let dz1: Vec<f64> =
                da1.iter().zip(&cache.a1).map(|(dv, a)| dv * (1.0 - a * a)).collect();
            outer_acc(&dz1, &cache.x, &mut grad[l.w1.clone()]);
            for (g, dzi) in grad[l.b1.clone()].iter_mut().zip(&dz1) {
                *g += dzi;
            }

            // Recurrent flow into the previous step, cut at boundaries.
            dh.fill(0.0);
            if resets[t] {
                dc.fill(0.0);
            } else {
                matvec_t_acc(&p[l.wh.clone()], &dz, &mut dh);
            }
        }
    }

    // -- Persistence --

    pub fn to_param_store(&self) -> ParamStore {
        let d = &self.dims;
        let l = layout(d);
        let mut store = ParamStore::new();
        store.set_meta_usize("obs", d.obs);
        store.set_meta_usize("act", d.act);
        store.set_meta_usize("embed", d.embed);
        store.set_meta_usize("hidden", d.hidden);
        let g = 4 * d.hidden;
        let slots: [(&str, Range<usize>, Vec<usize>); 12] = [
            ("w1", l.w1, vec![d.embed, d.obs]),
            ("b1", l.b1, vec![d.embed]),
            ("w2", l.w2, vec![d.embed, d.embed]),
            ("b2", l.b2, vec![d.embed]),
            ("lstm_wx", l.wx, vec![g, d.embed]),
            ("lstm_wh", l.wh, vec![g, d.hidden]),
            ("lstm_b", l.bl, vec![g]),
            ("actor_w", l.wa, vec![d.act, d.hidden]),
            ("actor_b", l.ba, vec![d.act]),
            ("critic_w", l.wv, vec![1, d.hidden]),
            ("critic_b", l.bv, vec![1]),
            ("log_std", l.log_std, vec![d.act]),
        ];
        for (name, range, shape) in slots {
            store
                .insert(name, shape, self.params[range].to_vec())
                .expect("policy parameters are finite");
        }
        store
    }

    pub fn from_param_store(store: &ParamStore) -> Result<RecurrentPolicy, RlError> {
        let need = |key: &str| {
            store.meta_usize(key).ok_or(RlError::BadCheckpoint("missing dimension metadata"))
        };
        let dims = NetDims {
            obs: need("obs")?,
            act: need("act")?,
            embed: need("embed")?,
            hidden: need("hidden")?,
        };
        dims.validate()?;
        let l = layout(&dims);
        let mut params = vec![0.0; l.total];
        let slots: [(&str, Range<usize>); 12] = [
            ("w1", l.w1),
            ("b1", l.b1),
            ("w2", l.w2),
            ("b2", l.b2),
            ("lstm_wx", l.wx),
            ("lstm_wh", l.wh),
            ("lstm_b", l.bl),
            ("actor_w", l.wa),
            ("actor_b", l.ba),
            ("critic_w", l.wv),
            ("critic_b", l.bv),
            ("log_std", l.log_std),
        ];
        for (name, range) in slots {
            let tensor = store.get(name)?;
            if tensor.data.len() != range.len() {
                return Err(RlError::BadCheckpoint("tensor size does not match metadata"));
            }
            params[range].copy_from_slice(&tensor.data);
        }
        Ok(RecurrentPolicy { dims, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        self.to_param_store().save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RecurrentPolicy, RlError> {
        RecurrentPolicy::from_param_store(&ParamStore::load(path)?)
    }
}

// ---------- Gaussian head ----------

/// u = mean + exp(log_std) * standard normal, drawn componentwise.
pub fn gaussian_sample<R: Rng>(mean: &[f64], log_std: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, ls)| {
            let z: f64 = rng.sample(StandardNormal);
            m + ls.exp() * z
        })
        .collect()
}

/// Log density of a diagonal Gaussian at u.
pub fn gaussian_logp(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((ui, mi), ls)| {
            let z = (ui - mi) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Differential entropy of the diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
}

/// tanh squash into (-1, 1) componentwise.
pub fn squash(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| v.tanh()).collect()
}

// ---------- Tests ----------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> NetDims {
        NetDims { obs: 3, act: 2, embed: 6, hidden: 4 }
    }

    fn tiny_policy(seed: u64) -> RecurrentPolicy {
        RecurrentPolicy::new(tiny(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn obs_seq(seed: u64, len: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    // -- Shapes and determinism --

    #[test]
    fn the_flat_vector_covers_every_tensor_exactly_once() {
        let d = tiny();
        let l = layout(&d);
        let expected = 6 * 3 + 6 + 36 + 6 + 16 * 6 + 16 * 4 + 16 + 2 * 4 + 2 + 4 + 1 + 2;
        assert_eq!(l.total, expected);
        assert_eq!(tiny_policy(0).param_count(), expected);
        assert_eq!(l.log_std.end, l.total);
    }

    #[test]
    fn the_same_seed_builds_the_same_policy() {
        assert_eq!(tiny_policy(9), tiny_policy(9));
        assert_ne!(tiny_policy(9), tiny_policy(10));
    }

    #[test]
    fn a_wrong_observation_length_is_rejected() {
        let p = tiny_policy(1);
        let mut hid = p.hidden_state();
        let err = p.step(&[0.0; 5], &mut hid).unwrap_err();
        assert!(matches!(err, RlError::ObsLength { expected: 3, got: 5 }));
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        let d = NetDims { obs: 0, act: 2, embed: 6, hidden: 4 };
        let err = RecurrentPolicy::new(d, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, RlError::BadConfig(_)));
    }

    // -- Gaussian head --

    #[test]
    fn the_log_density_normalizes_to_one() {
        let (mean, log_std) = ([0.3], [-0.2]);
        let sigma = (-0.2f64).exp();
        let (lo, hi) = (mean[0] - 10.0 * sigma, mean[0] + 10.0 * sigma);
        let n = 200_000;
        let dx = (hi - lo) / n as f64;
        let mut integral = 0.0;
        for k in 0..=n {
            let u = lo + k as f64 * dx;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            integral += w * gaussian_logp(&[u], &mean, &log_std).exp() * dx;
        }
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn the_log_density_factorizes_over_components() {
        let u = [0.4, -1.1];
        let mean = [0.1, 0.2];
        let ls = [-0.3, 0.5];
        let joint = gaussian_logp(&u, &mean, &ls);
        let split = gaussian_logp(&u[..1], &mean[..1], &ls[..1])
            + gaussian_logp(&u[1..], &mean[1..], &ls[1..]);
        assert_eq!(joint, split);
    }

    #[test]
    fn the_peak_log_density_matches_the_closed_form() {
        let mean = [0.7, -0.2];
        let ls = [0.1, -0.4];
        let expect = -(0.1 + -0.4) - LN_2PI;
        approx::assert_abs_diff_eq!(gaussian_logp(&mean, &mean, &ls), expect, epsilon = 1e-12);
    }

    #[test]
    fn entropy_matches_the_numeric_integral() {
        let log_std = [0.3];
        let sigma = 0.3f64.exp();
        let n = 200_000;
        let (lo, hi) = (-12.0 * sigma, 12.0 * sigma);
        let dx = (hi - lo) / n as f64;
        let mut h = 0.0;
        for k in 0..=n {
            let u = lo + k as f64 * dx;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let lp = gaussian_logp(&[u], &[0.0], &log_std);
            h -= w * lp.exp() * lp * dx;
        }
        approx::assert_abs_diff_eq!(h, gaussian_entropy(&log_std), epsilon = 1e-6);
    }

    #[test]
    fn sampling_is_deterministic_per_rng_state() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let u = gaussian_sample(&[0.0, 1.0], &[-0.5, 0.0], &mut a);
        let v = gaussian_sample(&[0.0, 1.0], &[-0.5, 0.0], &mut b);
        assert_eq!(u, v);
        assert!(squash(&u).iter().all(|a| a.abs() < 1.0));
    }

    // -- Recurrence --

    #[test]
    fn the_hidden_state_carries_memory_between_steps() {
        let p = tiny_policy(3);
        let mut hid = p.hidden_state();
        let obs = [0.2, -0.4, 0.9];
        let first = p.step(&obs, &mut hid).unwrap();
        let second = p.step(&obs, &mut hid).unwrap();
        assert_ne!(first, second, "identical observations must differ through the hidden state");
    }

    #[test]
    fn resetting_the_hidden_state_reproduces_the_first_tick() {
        let p = tiny_policy(3);
        let mut hid = p.hidden_state();
        let obs = [0.2, -0.4, 0.9];
        let first = p.step(&obs, &mut hid).unwrap();
        let _ = p.step(&[1.0, 1.0, -1.0], &mut hid).unwrap();
        hid.reset();
        assert_eq!(p.step(&obs, &mut hid).unwrap(), first);
    }

    // -- Backpropagation --

    /// J = sum_t r_t . mean_t + s_t * value_t over a replayed sequence.
    fn functional(
        p: &RecurrentPolicy,
        seq: &[Vec<f64>],
        resets: &[bool],
        r: &[Vec<f64>],
        s: &[f64],
    ) -> f64 {
        let mut hid = p.hidden_state();
        let mut j = 0.0;
        for t in 0..seq.len() {
            if resets[t] {
                hid.reset();
            }
            let out = p.step(&seq[t], &mut hid).unwrap();
            j += out.mean.iter().zip(&r[t]).map(|(m, ri)| m * ri).sum::<f64>();
            j += s[t] * out.value;
        }
        j
    }

    #[test]
    fn bptt_gradients_match_central_differences() {
        let p = tiny_policy(17);
        let seq = obs_seq(40, 6, 3);
        let resets = [true, false, false, true, false, false];
        let r = obs_seq(41, 6, 2);
        let s: Vec<f64> = obs_seq(42, 6, 1).into_iter().map(|v| v[0]).collect();

        let mut caches = Vec::new();
        let mut hid = p.hidden_state();
        for t in 0..seq.len() {
            if resets[t] {
                hid.reset();
            }
            let (_, cache) = p.step_cached(&seq[t], &mut hid).unwrap();
            caches.push(cache);
        }
        let mut grad = vec![0.0; p.param_count()];
        p.backward_sequence(&caches, &resets, &r, &s, &mut grad);

        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let eps = 1e-5;
        for _ in 0..12 {
            let k = rng.random_range(0..p.param_count() - 2);
            let mut plus = p.clone();
            plus.params_mut()[k] += eps;
            let mut minus = p.clone();
            minus.params_mut()[k] -= eps;
            let fd = (functional(&plus, &seq, &resets, &r, &s)
                - functional(&minus, &seq, &resets, &r, &s))
                / (2.0 * eps);
            let denom = grad[k].abs().max(fd.abs()).max(1e-6);
            assert!(
                ((grad[k] - fd) / denom).abs() < 1e-4,
                "param {k}: analytic {} vs fd {fd}",
                grad[k]
            );
        }
    }

    #[test]
    fn gradients_ignore_everything_before_an_episode_boundary() {
        let p = tiny_policy(8);
        let resets = [true, false, true, false];
        // Only the final step contributes to J.
        let r = vec![vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.4, -1.2]];
        let s = vec![0.0, 0.0, 0.0, 0.8];

        let run = |pre: &[Vec<f64>]| {
            let mut seq = pre.to_vec();
            seq.push(vec![0.5, 0.5, -0.5]);
            seq.push(vec![-0.1, 0.2, 0.3]);
            let mut hid = p.hidden_state();
            let mut caches = Vec::new();
            for t in 0..seq.len() {
                if resets[t] {
                    hid.reset();
                }
                let (_, cache) = p.step_cached(&seq[t], &mut hid).unwrap();
                caches.push(cache);
            }
            let mut grad = vec![0.0; p.param_count()];
            p.backward_sequence(&caches, &resets, &r, &s, &mut grad);
            grad
        };

        let a = run(&[vec![0.9, 0.9, 0.9], vec![-0.9, 0.4, 0.0]]);
        let b = run(&[vec![-0.3, 0.1, 0.7], vec![0.2, -0.8, 0.5]]);
        assert_eq!(a, b, "pre-boundary observations leaked into the gradient");
    }

    #[test]
    fn the_log_std_span_receives_no_sequence_gradient() {
        let p = tiny_policy(2);
        let seq = obs_seq(50, 3, 3);
        let resets = [true, false, false];
        let r = obs_seq(51, 3, 2);
        let s = vec![1.0, -1.0, 0.5];
        let mut caches = Vec::new();
        let mut hid = p.hidden_state();
        for x in &seq {
            let (_, c) = p.step_cached(x, &mut hid).unwrap();
            caches.push(c);
        }
        let mut grad = vec![0.0; p.param_count()];
        p.backward_sequence(&caches, &resets, &r, &s, &mut grad);
        assert!(grad[p.log_std_range()].iter().all(|&g| g == 0.0));
        assert!(grad.iter().any(|&g| g != 0.0));
    }

    // -- Persistence --

    #[test]
    fn a_saved_policy_loads_back_bit_for_bit() {
        let p = RecurrentPolicy::new(
            NetDims { obs: 7, act: 4, embed: 10, hidden: 5 },
            &mut ChaCha8Rng::seed_from_u64(77),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        p.save(&path).unwrap();
        let q = RecurrentPolicy::load(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn a_store_without_metadata_is_rejected() {
        let store = ParamStore::new();
        let err = RecurrentPolicy::from_param_store(&store).unwrap_err();
        assert!(matches!(err, RlError::BadCheckpoint(_)));
    }

    #[test]
    fn a_truncated_store_is_rejected() {
        let p = tiny_policy(4);
        let mut store = p.to_param_store();
        store.set_meta_usize("hidden", 9);
        assert!(RecurrentPolicy::from_param_store(&store).is_err());
    }
}
