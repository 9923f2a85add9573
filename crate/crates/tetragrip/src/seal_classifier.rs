//! Synthetic seal-outcome dataset and the small feed-forward classifier that
//! predicts whether suction will hold from one multizone frame plus the
//! vacuum reading.
//!
//! Each sample simulates one cup approach against a flat plate at a sampled
//! gap and incidence angle: the multizone sensor (recessed behind the cup
//! lip) images the plate, the ejector settles for several time constants, and
//! the ground-truth grasp check labels the sample. The classifier is a plain
//! MLP with rectifier hidden layers and a sigmoid output, trained by
//! mini-batch gradient descent on binary cross-entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::geometry::{build_bvh, transform_mesh, Pose, Quat, TriangleMesh, Vec3};
use crate::gripper::{evaluate_seal, is_grasped, GraspConfig, VacuumEjectorState};
use crate::params::{ParamError, ParamStore};
use crate::scene::CUP_RADIUS;
use crate::sensors::{frame_mean, sample_tof, sample_vacuum, ToFConfig, ToFFrame, VacuumConfig};

pub use crate::sensors::SENSOR_RECESS;

// ---------- Errors ----------

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("dataset needs at least {min} samples, requested {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("feature length {got} does not match input layer {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("bad config: {0}")]
    BadConfig(&'static str),
    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Params(#[from] ParamError),
}

// ---------- Dataset ----------

/// 64 zone distances (invalid zones filled with max_range), the frame mean
/// (max_range when no zone was valid), and the vacuum pressure in kPa.
pub const FEATURE_COUNT: usize = 66;

/// Measurement noise on the vacuum feature, kPa. The label always comes from
/// the noiseless settled pressure.
pub const PRESSURE_FEATURE_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SealSample {
    pub features: Vec<f64>,
    pub label: bool,
}

/// One cup-vs-plate trial at a fixed lip gap (metres) and incidence angle
/// (degrees, sign of the yaw chosen by the caller).
fn sample_at<R: Rng>(gap: f64, angle_deg: f64, rng: &mut R) -> SealSample {
    let grasp = GraspConfig::default();
    let tip = Pose::from_translation(Vec3::new(0.0, 0.0, 0.10));

    // Plate plane through the point `CUP_RADIUS + gap` ahead of the tip
    // centre, yawed about that point so the probe distance stays exact.
    let pivot = tip.translation + Vec3::new(CUP_RADIUS + gap, 0.0, 0.0);
    let plate = TriangleMesh::rectangle_facing_neg_x(0.5, 0.5);
    let place = Pose::from_translation(pivot)
        .compose(&Pose::new(Quat::from_yaw(angle_deg.to_radians()), Vec3::ZERO));
    let mesh = transform_mesh(&plate, &place);
    let bvh = build_bvh(&[(0, &mesh)]).expect("plate mesh is valid");

    let cup = evaluate_seal(0, &tip, CUP_RADIUS, &bvh, &grasp);

    // Settle the ejector for 6 tau with the valve open, then read the
    // ground-truth grasp outcome.
    let mut ejector = VacuumEjectorState::default();
    ejector.valve_open[0] = true;
    let dt = 1.0 / 130.0;
    let steps = (6.0 * ejector.tau / dt).ceil() as usize;
    for _ in 0..steps {
        crate::gripper::step_vacuum(&mut ejector, [cup.seal_fraction, 0.0, 0.0, 0.0], dt)
            .expect("settling step is valid");
    }
    let label = is_grasped(&ejector, 0, &grasp).expect("station 0 exists");

    let tof_cfg = ToFConfig::default();
    let sensor = Pose::from_translation(tip.translation - Vec3::new(SENSOR_RECESS, 0.0, 0.0));
    let frame = sample_tof(&bvh, &sensor, &tof_cfg, 0.0, 0, rng).expect("default config valid");
    let vac_cfg = VacuumConfig { noise_sigma: PRESSURE_FEATURE_SIGMA, ..VacuumConfig::default() };
    let measured = sample_vacuum(ejector.pressures[0], 0, 0.0, &vac_cfg, rng)
        .expect("settled pressure is in range");

    SealSample { features: seal_features(&frame, measured.pressure), label }
}

/// Feature layout shared by dataset generation and inference: the 64 zone
/// distances row-major, the valid-zone mean, and the vacuum pressure. An
/// all-invalid frame falls back to the mean of the stored distances, which
/// the sensor pins at max range.
pub fn seal_features(frame: &ToFFrame, pressure_kpa: f64) -> Vec<f64> {
    let mut features = Vec::with_capacity(FEATURE_COUNT);
    for row in &frame.distances {
        features.extend_from_slice(row);
    }
    let mean = frame_mean(frame).unwrap_or_else(|_| {
        let sum: f64 = frame.distances.iter().flatten().sum();
        sum / features.len() as f64
    });
    features.push(mean);
    features.push(pressure_kpa);
    features
}

/// Generates `n` cup-vs-plate trials with angles inside `angle_range_deg`.
/// Draws alternate between the full gap/angle range and a tightened
/// near-seal regime so both classes stay well represented; the full range
/// alone yields under 2% positives because sealing needs both a small gap
/// and a shallow angle.
pub fn generate_seal_dataset<R: Rng>(
    n: usize,
    angle_range_deg: (f64, f64),
    rng: &mut R,
) -> Result<Vec<SealSample>, ClassifierError> {
    if n < 100 {
        return Err(ClassifierError::TooFewSamples { min: 100, got: n });
    }
    let (lo, hi) = angle_range_deg;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(ClassifierError::BadConfig("angle range must be finite with lo < hi"));
    }
    let gap_max = GraspConfig::default().seal_gap_max;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (gap, angle) = if i % 2 == 0 {
            (rng.random_range(0.0..3.0 * gap_max), rng.random_range(lo..hi))
        } else {
            (
                rng.random_range(0.0..0.2 * gap_max),
                rng.random_range(lo..lo + 0.2 * (hi - lo)),
            )
        };
        let signed = if rng.random_range(0.0..1.0) < 0.5 { angle } else { -angle };
        out.push(sample_at(gap, signed, rng));
    }
    Ok(out)
}

// ---------- CSV ----------

/// 66 feature columns `f00..f65` plus a 0/1 `label` column.
pub fn dataset_to_csv(data: &[SealSample]) -> String {
    let mut s = String::new();
    for i in 0..FEATURE_COUNT {
        s.push_str(&format!("f{i:02},"));
    }
    s.push_str("label\n");
    for sample in data {
        for f in &sample.features {
            s.push_str(&format!("{f},"));
        }
        s.push_str(if sample.label { "1\n" } else { "0\n" });
    }
    s
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<SealSample>, ClassifierError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_COUNT + 1 {
            return Err(ClassifierError::Csv {
                line: idx + 1,
                reason: format!("expected {} fields, got {}", FEATURE_COUNT + 1, fields.len()),
            });
        }
        let mut features = Vec::with_capacity(FEATURE_COUNT);
        for f in &fields[..FEATURE_COUNT] {
            let v: f64 = f.parse().map_err(|e| ClassifierError::Csv {
                line: idx + 1,
                reason: format!("bad float {f:?}: {e}"),
            })?;
            features.push(v);
        }
        let label = match fields[FEATURE_COUNT] {
            "1" => true,
            "0" => false,
            other => {
                return Err(ClassifierError::Csv {
                    line: idx + 1,
                    reason: format!("bad label {other:?}"),
                })
            }
        };
        out.push(SealSample { features, label });
    }
    Ok(out)
}

pub fn write_dataset_csv(path: &Path, data: &[SealSample]) -> Result<(), ClassifierError> {
    std::fs::write(path, dataset_to_csv(data))?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Vec<SealSample>, ClassifierError> {
    dataset_from_csv(&std::fs::read_to_string(path)?)
}

// ---------- MLP ----------

/// Fully connected net with rectifier hidden layers and a single sigmoid
/// output. Inputs pass through a per-feature affine normalizer that `train`
/// fits on the training split and bakes into the model, so a saved model is
/// self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    /// weights[l] is sizes[l+1] x sizes[l], row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_offset: Vec<f64>,
    input_scale: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Mlp, ClassifierError> {
        Self::validate_sizes(sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let lim = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-lim..lim)).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
            input_offset: vec![0.0; sizes[0]],
            input_scale: vec![1.0; sizes[0]],
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Mlp, ClassifierError> {
        Self::validate_sizes(sizes)?;
        let weights = (0..sizes.len() - 1).map(|l| vec![0.0; sizes[l] * sizes[l + 1]]).collect();
        let biases = (0..sizes.len() - 1).map(|l| vec![0.0; sizes[l + 1]]).collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
            input_offset: vec![0.0; sizes[0]],
            input_scale: vec![1.0; sizes[0]],
        })
    }

    fn validate_sizes(sizes: &[usize]) -> Result<(), ClassifierError> {
        if sizes.len() < 2 {
            return Err(ClassifierError::BadConfig("need at least input and output layers"));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(ClassifierError::BadConfig("output layer must have size 1"));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(ClassifierError::BadConfig("zero-width layer"));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    /// Post-activation values for every layer, starting with the normalized
    /// input, plus the output logit.
    fn forward_cached(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, f64), ClassifierError> {
        if x.len() != self.sizes[0] {
            return Err(ClassifierError::FeatureLength { expected: self.sizes[0], got: x.len() });
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        let normed: Vec<f64> = x
            .iter()
            .zip(&self.input_offset)
            .zip(&self.input_scale)
            .map(|((v, off), sc)| (v - off) * sc)
            .collect();
        acts.push(normed);
        let mut logit = 0.0;
        for l in 0..self.weights.len() {
            let last = l == self.weights.len() - 1;
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &acts[l];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut z = self.biases[l][o];
                for (w, a) in row.iter().zip(prev) {
                    z += w * a;
                }
                next[o] = if last { z } else { z.max(0.0) };
            }
            if last {
                logit = next[0];
            }
            acts.push(next);
        }
        Ok((acts, logit))
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        let (_, logit) = self.forward_cached(x)?;
        Ok(sigmoid(logit))
    }

    /// Probability and the 0.5-threshold decision.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, bool), ClassifierError> {
        let p = self.forward(x)?;
        Ok((p, p >= 0.5))
    }

    /// Binary cross-entropy in a sigmoid-stable form.
    pub fn loss(&self, x: &[f64], label: bool) -> Result<f64, ClassifierError> {
        let (_, z) = self.forward_cached(x)?;
        let y = if label { 1.0 } else { 0.0 };
        Ok(z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).ln())
    }

    /// Loss and its gradient with respect to every weight and bias.
    fn grad(&self, x: &[f64], label: bool) -> Result<(f64, Grads), ClassifierError> {
        let (acts, z) = self.forward_cached(x)?;
        let y = if label { 1.0 } else { 0.0 };
        let loss = z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).ln();

        let mut dw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut db: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        // dL/dz for sigmoid + BCE.
        let mut delta = vec![sigmoid(z) - y];
        for l in (0..self.weights.len()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &acts[l];
            for o in 0..n_out {
                db[l][o] = delta[o];
                let row = &mut dw[l][o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g = delta[o] * a;
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; n_in];
                for o in 0..n_out {
                    let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += delta[o] * w;
                    }
                }
                // Rectifier gate: the cached activation is zero exactly where
                // the unit was clamped.
                for (pd, a) in prev_delta.iter_mut().zip(&acts[l]) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
        Ok((loss, Grads { dw, db }))
    }

    pub fn to_param_store(&self) -> ParamStore {
        let mut store = ParamStore::new();
        store.set_meta_usize("layers", self.sizes.len());
        for (i, s) in self.sizes.iter().enumerate() {
            store.set_meta_usize(&format!("size{i}"), *s);
        }
        for l in 0..self.weights.len() {
            store
                .insert(
                    &format!("w{l}"),
                    vec![self.sizes[l + 1], self.sizes[l]],
                    self.weights[l].clone(),
                )
                .expect("weights are finite");
            store
                .insert(&format!("b{l}"), vec![self.sizes[l + 1]], self.biases[l].clone())
                .expect("biases are finite");
        }
        store
            .insert("input_offset", vec![self.sizes[0]], self.input_offset.clone())
            .expect("offset is finite");
        store
            .insert("input_scale", vec![self.sizes[0]], self.input_scale.clone())
            .expect("scale is finite");
        store
    }

    pub fn from_param_store(store: &ParamStore) -> Result<Mlp, ClassifierError> {
        let layers = store
            .meta_usize("layers")
            .ok_or(ClassifierError::BadConfig("missing layer count"))?;
        let mut sizes = Vec::with_capacity(layers);
        for i in 0..layers {
            sizes.push(
                store
                    .meta_usize(&format!("size{i}"))
                    .ok_or(ClassifierError::BadConfig("missing layer size"))?,
            );
        }
        Self::validate_sizes(&sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layers - 1 {
            weights.push(store.get(&format!("w{l}"))?.data.clone());
            biases.push(store.get(&format!("b{l}"))?.data.clone());
        }
        Ok(Mlp {
            input_offset: store.get("input_offset")?.data.clone(),
            input_scale: store.get("input_scale")?.data.clone(),
            sizes,
            weights,
            biases,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        self.to_param_store().save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mlp, ClassifierError> {
        Mlp::from_param_store(&ParamStore::load(path)?)
    }
}

struct Grads {
    dw: Vec<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

// ---------- Training ----------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction held out for validation, in (0, 1).
    pub validation_split: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 40,
            batch_size: 32,
            validation_split: 0.2,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub val_accuracy: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    /// Mean loss over the full training split after each epoch.
    pub train_losses: Vec<f64>,
}

/// Mini-batch gradient descent on binary cross-entropy. Fits the input
/// normalizer on the training split, then runs `epochs` shuffled passes.
/// Deterministic for a fixed seed. Zero epochs returns the model untouched.
pub fn train(
    mlp: &Mlp,
    data: &[SealSample],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainMetrics), ClassifierError> {
    if !(cfg.validation_split > 0.0 && cfg.validation_split < 1.0) {
        return Err(ClassifierError::BadConfig("validation split must be in (0, 1)"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(ClassifierError::BadConfig("learning rate must be positive"));
    }
    if cfg.batch_size == 0 {
        return Err(ClassifierError::BadConfig("batch size must be positive"));
    }
    if data.iter().all(|s| s.label) || data.iter().all(|s| !s.label) {
        return Err(ClassifierError::SingleClass);
    }
    for s in data {
        if s.features.len() != mlp.input_size() {
            return Err(ClassifierError::FeatureLength {
                expected: mlp.input_size(),
                got: s.features.len(),
            });
        }
        if s.features.iter().any(|f| !f.is_finite()) {
            return Err(ClassifierError::BadConfig("non-finite feature"));
        }
    }
    if cfg.epochs == 0 {
        let metrics = TrainMetrics {
            val_accuracy: 0.0,
            val_precision: 0.0,
            val_recall: 0.0,
            train_losses: Vec::new(),
        };
        return Ok((mlp.clone(), metrics));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64) * cfg.validation_split).round() as usize;
    let n_val = n_val.clamp(1, data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let mut model = mlp.clone();
    fit_normalizer(&mut model, data, train_idx);

    let mut train_order: Vec<usize> = train_idx.to_vec();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        train_order.shuffle(&mut rng);
        for chunk in train_order.chunks(cfg.batch_size) {
            let mut dw: Vec<Vec<f64>> =
                model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
            let mut db: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
            for &i in chunk {
                let (_, g) = model.grad(&data[i].features, data[i].label)?;
                for (acc, layer) in dw.iter_mut().zip(&g.dw) {
                    for (a, v) in acc.iter_mut().zip(layer) {
                        *a += v;
                    }
                }
                for (acc, layer) in db.iter_mut().zip(&g.db) {
                    for (a, v) in acc.iter_mut().zip(layer) {
                        *a += v;
                    }
                }
            }
            let step = cfg.learning_rate / chunk.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&dw) {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= step * gi;
                }
            }
            for (b, g) in model.biases.iter_mut().zip(&db) {
                for (bi, gi) in b.iter_mut().zip(g) {
                    *bi -= step * gi;
                }
            }
        }
        let mut total = 0.0;
        for &i in &train_order {
            total += model.loss(&data[i].features, data[i].label)?;
        }
        losses.push(total / train_order.len() as f64);
    }

    let (mut tp, mut tn, mut fp, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for &i in val_idx {
        let (_, pred) = model.predict(&data[i].features)?;
        match (pred, data[i].label) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
        }
    }
    let metrics = TrainMetrics {
        val_accuracy: (tp + tn) as f64 / val_idx.len() as f64,
        val_precision: if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 },
        val_recall: if tp + fne > 0 { tp as f64 / (tp + fne) as f64 } else { 0.0 },
        train_losses: losses,
    };
    Ok((model, metrics))
}

/// Per-feature z-score fitted on the training split; constant features get
/// unit scale so they pass through unamplified.
fn fit_normalizer(model: &mut Mlp, data: &[SealSample], train_idx: &[usize]) {
    let dim = model.input_size();
    let n = train_idx.len() as f64;
    let mut mean = vec![0.0; dim];
    for &i in train_idx {
        for (m, f) in mean.iter_mut().zip(&data[i].features) {
            *m += f;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for &i in train_idx {
        for ((v, f), m) in var.iter_mut().zip(&data[i].features).zip(&mean) {
            *v += (f - m) * (f - m);
        }
    }
    let scale: Vec<f64> =
        var.iter().map(|v| { let sd = (v / n).sqrt(); if sd > 1e-9 { 1.0 / sd } else { 1.0 } }).collect();
    model.input_offset = mean;
    model.input_scale = scale;
}

// ---------- Gradient check ----------

/// Max relative disagreement between the analytic gradient and central
/// finite differences over every weight and bias, at one input.
pub fn gradient_check(
    mlp: &Mlp,
    x: &[f64],
    label: bool,
    h: f64,
) -> Result<f64, ClassifierError> {
    let (_, g) = mlp.grad(x, label)?;
    let mut worst: f64 = 0.0;
    let mut probe = mlp.clone();
    for l in 0..mlp.weights.len() {
        for k in 0..mlp.weights[l].len() {
            let orig = mlp.weights[l][k];
            probe.weights[l][k] = orig + h;
            let up = probe.loss(x, label)?;
            probe.weights[l][k] = orig - h;
            let down = probe.loss(x, label)?;
            probe.weights[l][k] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = g.dw[l][k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((g.dw[l][k] - fd).abs() / denom);
        }
        for k in 0..mlp.biases[l].len() {
            let orig = mlp.biases[l][k];
            probe.biases[l][k] = orig + h;
            let up = probe.loss(x, label)?;
            probe.biases[l][k] = orig - h;
            let down = probe.loss(x, label)?;
            probe.biases[l][k] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = g.db[l][k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((g.db[l][k] - fd).abs() / denom);
        }
    }
    Ok(worst)
}

// ---------- Tests ----------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // -- Dataset --

    #[test]
    fn flush_contact_labels_true_and_wide_gap_false() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flush = sample_at(0.0, 0.0, &mut rng);
        assert!(flush.label);
        assert_eq!(flush.features.len(), FEATURE_COUNT);
        let gap_max = GraspConfig::default().seal_gap_max;
        let away = sample_at(3.0 * gap_max, 0.0, &mut rng);
        assert!(!away.label);
    }

    #[test]
    fn flush_zones_read_the_recessed_standoff() {
        // Perpendicular plate at the lip: every zone's boresight projection
        // is the recess plus the cup radius, within sensor noise.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_at(0.0, 0.0, &mut rng);
        let expect = SENSOR_RECESS + CUP_RADIUS;
        let mean = s.features[64];
        assert_relative_eq!(mean, expect, epsilon = 4.0 * 0.003 / 8.0);
        for f in &s.features[..64] {
            assert!((f - expect).abs() < 5.0 * 0.003, "zone {f} vs {expect}");
        }
        // Pressure feature sits near the saturated ejector level.
        assert!(s.features[65] > 75.0);
    }

    #[test]
    fn generated_classes_are_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = generate_seal_dataset(2000, (0.0, 45.0), &mut rng).unwrap();
        assert_eq!(data.len(), 2000);
        let pos = data.iter().filter(|s| s.label).count() as f64 / 2000.0;
        assert!((0.30..=0.70).contains(&pos), "positive fraction {pos}");
        for s in &data {
            assert!(s.features.iter().all(|f| f.is_finite()));
        }
    }

    #[test]
    fn dataset_generation_is_deterministic_and_validated() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let da = generate_seal_dataset(100, (0.0, 45.0), &mut a).unwrap();
        let db = generate_seal_dataset(100, (0.0, 45.0), &mut b).unwrap();
        assert_eq!(da, db);
        assert!(matches!(
            generate_seal_dataset(99, (0.0, 45.0), &mut a),
            Err(ClassifierError::TooFewSamples { min: 100, got: 99 })
        ));
        assert!(generate_seal_dataset(100, (10.0, 5.0), &mut a).is_err());
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = generate_seal_dataset(100, (0.0, 45.0), &mut rng).unwrap();
        let text = dataset_to_csv(&data);
        assert!(text.starts_with("f00,"));
        let back = dataset_from_csv(&text).unwrap();
        assert_eq!(back, data);
        assert!(dataset_from_csv("f00\n1.0\n").is_err());
    }

    // -- MLP forward/predict --

    #[test]
    fn zero_weights_output_exactly_half() {
        let mlp = Mlp::zeros(&[66, 32, 16, 1]).unwrap();
        let x = vec![0.3; 66];
        let (p, pred) = mlp.predict(&x).unwrap();
        assert_eq!(p, 0.5);
        assert!(pred);
    }

    #[test]
    fn prediction_is_deterministic_and_length_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::new(&[6, 4, 1], &mut rng).unwrap();
        let x = vec![0.1, -0.4, 0.9, 0.0, 2.0, -1.0];
        let a = mlp.predict(&x).unwrap();
        let b = mlp.predict(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.0 > 0.0 && a.0 < 1.0);
        assert!(matches!(
            mlp.predict(&x[..5]),
            Err(ClassifierError::FeatureLength { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn bad_layer_shapes_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(Mlp::new(&[6], &mut rng).is_err());
        assert!(Mlp::new(&[6, 4, 2], &mut rng).is_err());
        assert!(Mlp::new(&[6, 0, 1], &mut rng).is_err());
    }

    // -- Gradients --

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = Mlp::new(&[6, 4, 1], &mut rng).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = gradient_check(&mlp, &x, k % 2 == 0, 1e-5).unwrap();
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "max relative gradient error {worst}");
    }

    // -- Training --

    fn separable_set(n: usize, seed: u64) -> Vec<SealSample> {
        // Pressure column decides the class (positive iff > 40 kPa, with a
        // margin band excluded so the rule is learnable to ~100% despite the
        // 65 noise features).
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p = loop {
                    let p: f64 = rng.random_range(0.0..85.0);
                    if (p - 40.0).abs() >= 4.0 {
                        break p;
                    }
                };
                let mut features: Vec<f64> =
                    (0..65).map(|_| rng.random_range(0.0..0.4)).collect();
                features.push(p);
                SealSample { features, label: p > 40.0 }
            })
            .collect()
    }

    #[test]
    fn separable_toy_set_trains_to_high_accuracy() {
        let data = separable_set(4000, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = Mlp::new(&[66, 32, 16, 1], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 50, learning_rate: 0.5, ..TrainConfig::default() };
        let (model, metrics) = train(&mlp, &data, &cfg).unwrap();
        assert!(metrics.val_accuracy >= 0.99, "accuracy {}", metrics.val_accuracy);
        let mut hot = vec![0.2; 65];
        hot.push(80.0);
        assert!(model.predict(&hot).unwrap().1);
    }

    #[test]
    fn zero_epochs_leave_parameters_untouched() {
        let data = separable_set(200, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mlp = Mlp::new(&[66, 8, 1], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (model, metrics) = train(&mlp, &data, &cfg).unwrap();
        assert_eq!(model, mlp);
        assert!(metrics.train_losses.is_empty());
    }

    #[test]
    fn single_class_data_is_rejected() {
        let mut data = separable_set(200, 14);
        for s in &mut data {
            s.label = true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mlp = Mlp::new(&[66, 8, 1], &mut rng).unwrap();
        assert!(matches!(
            train(&mlp, &data, &TrainConfig::default()),
            Err(ClassifierError::SingleClass)
        ));
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let data = separable_set(300, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mlp = Mlp::new(&[66, 8, 1], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let (a, ma) = train(&mlp, &data, &cfg).unwrap();
        let (b, mb) = train(&mlp, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let ja = serde_json::to_string(&a.to_param_store()).unwrap();
        let jb = serde_json::to_string(&b.to_param_store()).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn full_train_loss_is_mostly_non_increasing_at_small_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let data = generate_seal_dataset(600, (0.0, 45.0), &mut rng).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(19);
        let mlp = Mlp::new(&[66, 32, 16, 1], &mut init_rng).unwrap();
        let cfg = TrainConfig { learning_rate: 5e-3, epochs: 20, ..TrainConfig::default() };
        let (_, metrics) = train(&mlp, &data, &cfg).unwrap();
        let rises = metrics
            .train_losses
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-12)
            .count();
        assert!(rises <= 1, "{rises} rises in {:?}", metrics.train_losses);
    }

    #[test]
    fn synthetic_dataset_reaches_holdout_bar() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let data = generate_seal_dataset(2000, (0.0, 45.0), &mut rng).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(21);
        let mlp = Mlp::new(&[66, 32, 16, 1], &mut init_rng).unwrap();
        let (model, metrics) = train(&mlp, &data, &TrainConfig::default()).unwrap();
        assert!(metrics.val_accuracy >= 0.90, "accuracy {}", metrics.val_accuracy);
        assert!(metrics.val_precision > 0.8 && metrics.val_recall > 0.8);
        // A fresh flush-contact sample must read as a seal.
        let probe = sample_at(0.0, 0.0, &mut rng);
        assert!(probe.label);
        assert!(model.predict(&probe.features).unwrap().1);
    }

    // -- Serialization --

    #[test]
    fn param_store_roundtrip_preserves_the_model() {
        let data = separable_set(300, 22);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mlp = Mlp::new(&[66, 16, 1], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let (model, _) = train(&mlp, &data, &cfg).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seal.json");
        model.save(&path).unwrap();
        let back = Mlp::load(&path).unwrap();
        assert_eq!(back, model);
        for s in data.iter().take(10) {
            assert_eq!(back.predict(&s.features).unwrap(), model.predict(&s.features).unwrap());
        }
    }
}
