//! A small dense multi-task network with per-task channel masks.
//!
//! The trunk is a stack of fully connected layers. During a task's forward
//! pass each trunk layer computes `s = W a + b`, zeroes the channels the
//! task does not own (`z = s ⊙ m`), and applies the activation. A scalar
//! linear head per task sits on the last trunk layer. Masking before the
//! activation means a masked channel contributes exactly zero downstream,
//! and backpropagation through the mask makes the weight and bias gradients
//! of masked channels exactly zero — not merely small — so tasks with
//! disjoint masks cannot influence each other's trunk parameters.
//!
//! Everything is `f64` with hand-written backpropagation and Adam; the
//! scale is desk-sized on purpose so runs are deterministic and cheap to
//! verify against finite differences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::PartitionSet;

/// Trunk-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Pass-through; handy for making a layer linear in tests.
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Pointwise loss on a scalar model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `(z - y)^2` on a raw output.
    Squared,
    /// Binary cross-entropy on a logit, computed in the overflow-safe form
    /// `max(z, 0) - z y + ln(1 + e^(-|z|))`.
    Logistic,
}

impl LossKind {
    pub fn loss(self, output: f64, target: f64) -> f64 {
        match self {
            LossKind::Squared => (output - target) * (output - target),
            LossKind::Logistic => {
                output.max(0.0) - output * target + (-output.abs()).exp().ln_1p()
            }
        }
    }

    /// d loss / d output.
    pub fn grad(self, output: f64, target: f64) -> f64 {
        match self {
            LossKind::Squared => 2.0 * (output - target),
            LossKind::Logistic => sigmoid(output) - target,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One fully connected trunk layer with an output-channel mask slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedLayer {
    /// `w[j]` is the fan-in weight row of output channel `j`.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl MaskedLayer {
    pub fn out_dim(&self) -> usize {
        self.w.len()
    }

    pub fn in_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    /// One vector per output channel: the weight row with the bias
    /// appended. This is the representation the cosine selection strategy
    /// compares channels by.
    pub fn channel_vectors(&self) -> Vec<Vec<f64>> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, &bias)| {
                let mut v = row.clone();
                v.push(bias);
                v
            })
            .collect()
    }
}

/// Scalar linear head for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Trunk plus one scalar head per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedNetwork {
    pub input_dim: usize,
    pub layers: Vec<MaskedLayer>,
    pub heads: Vec<TaskHead>,
}

/// Per-sample forward state kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[d + 1]` is layer `d`'s
    /// post-activation output.
    pub activations: Vec<Vec<f64>>,
    /// Post-mask pre-activations per layer.
    pub preacts: Vec<Vec<f64>>,
    pub output: f64,
}

impl MaskedNetwork {
    /// Fresh network with weights drawn from `U(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in))` and zero biases; trunk layers use ReLU. Weights are
    /// drawn layer by layer, row by row, heads last, so a fixed seed pins
    /// every parameter.
    pub fn init(
        input_dim: usize,
        trunk_widths: &[usize],
        num_tasks: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input_dim == 0 || num_tasks == 0 || trunk_widths.is_empty() {
            return Err(Error::Config(
                "network needs input_dim >= 1, at least one trunk layer, and at least one task"
                    .into(),
            ));
        }
        if trunk_widths.contains(&0) {
            return Err(Error::Config("trunk layer widths must be >= 1".into()));
        }
        let mut layers = Vec::with_capacity(trunk_widths.len());
        let mut fan_in = input_dim;
        for &width in trunk_widths {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..width)
                .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                .collect();
            layers.push(MaskedLayer {
                w,
                b: vec![0.0; width],
                activation: Activation::Relu,
            });
            fan_in = width;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let heads = (0..num_tasks)
            .map(|_| TaskHead {
                w: (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect(),
                b: 0.0,
            })
            .collect();
        Ok(MaskedNetwork {
            input_dim,
            layers,
            heads,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn trunk_widths(&self) -> Vec<usize> {
        self.layers.iter().map(MaskedLayer::out_dim).collect()
    }

    /// Verifies that a partition set masks exactly this trunk: same layer
    /// count, layer widths, and task count.
    pub fn check_shapes(&self, parts: &PartitionSet) -> Result<()> {
        if parts.num_layers() != self.layers.len() {
            return Err(Error::ShapeMismatch {
                layer: parts.num_layers(),
                width: self.layers.len(),
                s: 0,
            });
        }
        for (d, layer) in self.layers.iter().enumerate() {
            if parts.layer(d).num_params() != layer.out_dim() {
                return Err(Error::ShapeMismatch {
                    layer: d,
                    width: layer.out_dim(),
                    s: parts.layer(d).num_params(),
                });
            }
        }
        if parts.num_tasks() != self.num_tasks() {
            return Err(Error::Config(format!(
                "partition set has {} tasks, network has {} heads",
                parts.num_tasks(),
                self.num_tasks()
            )));
        }
        Ok(())
    }

    /// Forward pass for one task on one sample, keeping the cache needed by
    /// [`backward_task`](Self::backward_task). Shapes must match; run
    /// [`check_shapes`](Self::check_shapes) once per (network, partition)
    /// pairing beforehand.
    pub fn forward_task(&self, x: &[f64], task: usize, parts: &PartitionSet) -> ForwardCache {
        assert_eq!(x.len(), self.input_dim, "input dimension mismatch");
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut preacts = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for (d, layer) in self.layers.iter().enumerate() {
            let mask = parts.layer(d).task_mask(task);
            let prev = activations.last().unwrap();
            let mut z = vec![0.0; layer.out_dim()];
            let mut a = vec![0.0; layer.out_dim()];
            for j in 0..layer.out_dim() {
                if mask[j] {
                    let s: f64 = layer.w[j]
                        .iter()
                        .zip(prev)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
                        + layer.b[j];
                    z[j] = s;
                    a[j] = layer.activation.apply(s);
                }
                // Masked channels keep z = a = 0: the mask zeroes the
                // pre-activation and both activations map 0 to 0.
            }
            preacts.push(z);
            activations.push(a);
        }
        let head = &self.heads[task];
        let last = activations.last().unwrap();
        let output = head.w.iter().zip(last).map(|(w, a)| w * a).sum::<f64>() + head.b;
        ForwardCache {
            activations,
            preacts,
            output,
        }
    }

    /// Scalar output for one task on one sample.
    pub fn output(&self, x: &[f64], task: usize, parts: &PartitionSet) -> f64 {
        self.forward_task(x, task, parts).output
    }

    /// Backpropagates `d loss / d output` for one task and accumulates into
    /// `grads`. Channels the task does not own receive exactly zero weight
    /// and bias gradients, and other tasks' heads are untouched.
    pub fn backward_task(
        &self,
        cache: &ForwardCache,
        dout: f64,
        task: usize,
        parts: &PartitionSet,
        grads: &mut Gradients,
    ) {
        let head = &self.heads[task];
        let last = cache.activations.last().unwrap();
        for (g, a) in grads.heads[task].0.iter_mut().zip(last) {
            *g += dout * a;
        }
        grads.heads[task].1 += dout;

        // d loss / d (last trunk activation)
        let mut da: Vec<f64> = head.w.iter().map(|w| dout * w).collect();
        for d in (0..self.layers.len()).rev() {
            let layer = &self.layers[d];
            let mask = parts.layer(d).task_mask(task);
            let prev = &cache.activations[d];
            let z = &cache.preacts[d];
            let (dw, db) = &mut grads.layers[d];
            let mut da_prev = vec![0.0; prev.len()];
            for j in 0..layer.out_dim() {
                if !mask[j] {
                    continue;
                }
                let ds = da[j] * layer.activation.derivative(z[j]);
                if ds == 0.0 {
                    continue;
                }
                db[j] += ds;
                for (k, (g, p)) in dw[j].iter_mut().zip(prev).enumerate() {
                    *g += ds * p;
                    da_prev[k] += ds * layer.w[j][k];
                }
            }
            da = da_prev;
        }
    }

    /// Mean loss and mean gradients of one task over a batch.
    pub fn batch_gradients(
        &self,
        task: usize,
        xs: &[Vec<f64>],
        ys: &[f64],
        loss: LossKind,
        parts: &PartitionSet,
    ) -> (f64, Gradients) {
        assert!(!xs.is_empty(), "empty batch");
        assert_eq!(xs.len(), ys.len(), "inputs and targets disagree in length");
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let cache = self.forward_task(x, task, parts);
            total += loss.loss(cache.output, y);
            self.backward_task(&cache, loss.grad(cache.output, y), task, parts, &mut grads);
        }
        let inv = 1.0 / xs.len() as f64;
        grads.scale(inv);
        (total * inv, grads)
    }

    /// Total parameter count in the flat ordering.
    pub fn param_count(&self) -> usize {
        let trunk: usize = self
            .layers
            .iter()
            .map(|l| l.out_dim() * l.in_dim() + l.out_dim())
            .sum();
        let heads: usize = self.heads.iter().map(|h| h.w.len() + 1).sum();
        trunk + heads
    }

    /// Flattens every parameter into one vector: trunk layers in order
    /// (weight rows top to bottom, then biases), then heads in task order
    /// (weights, then bias). [`Gradients::flat`] uses the same ordering.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for row in &layer.w {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&layer.b);
        }
        for head in &self.heads {
            out.extend_from_slice(&head.w);
            out.push(head.b);
        }
        out
    }

    /// Inverse of [`params_flat`](Self::params_flat).
    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length mismatch");
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for row in &mut layer.w {
                for w in row.iter_mut() {
                    *w = it.next().unwrap();
                }
            }
            for b in &mut layer.b {
                *b = it.next().unwrap();
            }
        }
        for head in &mut self.heads {
            for w in &mut head.w {
                *w = it.next().unwrap();
            }
            head.b = it.next().unwrap();
        }
    }

    /// One optimizer step over the whole flat parameter vector.
    pub fn apply_gradients(&mut self, opt: &mut Adam, grads: &Gradients) {
        let mut params = self.params_flat();
        opt.step(&mut params, &grads.flat());
        self.set_params_flat(&params);
    }
}

/// Gradient accumulator shaped like a [`MaskedNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `(d w, d b)` per trunk layer.
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    /// `(d w, d b)` per head.
    pub heads: Vec<(Vec<f64>, f64)>,
}

impl Gradients {
    pub fn zeros_like(net: &MaskedNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![vec![0.0; l.in_dim()]; l.out_dim()], vec![0.0; l.out_dim()]))
                .collect(),
            heads: net.heads.iter().map(|h| (vec![0.0; h.w.len()], 0.0)).collect(),
        }
    }

    /// Elementwise sum, for combining per-task gradients into one step.
    pub fn add(&mut self, other: &Gradients) {
        for ((dw, db), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (row, orow) in dw.iter_mut().zip(ow) {
                for (g, o) in row.iter_mut().zip(orow) {
                    *g += o;
                }
            }
            for (g, o) in db.iter_mut().zip(ob) {
                *g += o;
            }
        }
        for ((dw, db), (ow, ob)) in self.heads.iter_mut().zip(&other.heads) {
            for (g, o) in dw.iter_mut().zip(ow) {
                *g += o;
            }
            *db += ob;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (dw, db) in &mut self.layers {
            for row in dw.iter_mut() {
                for g in row.iter_mut() {
                    *g *= factor;
                }
            }
            for g in db.iter_mut() {
                *g *= factor;
            }
        }
        for (dw, db) in &mut self.heads {
            for g in dw.iter_mut() {
                *g *= factor;
            }
            *db *= factor;
        }
    }

    /// Same flat ordering as [`MaskedNetwork::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (dw, db) in &self.layers {
            for row in dw {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(db);
        }
        for (dw, db) in &self.heads {
            out.extend_from_slice(dw);
            out.push(*db);
        }
        out
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 1e-4;

    pub fn new(lr: f64, dim: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    /// One update. A coordinate with zero gradient and zero accumulated
    /// moments moves by exactly zero, so parameters a task never touches
    /// stay bit-identical.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer dimension mismatch");
        assert_eq!(params.len(), grads.len(), "gradient dimension mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            if self.m[i] == 0.0 && self.v[i] == 0.0 {
                continue;
            }
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{InitMode, PartitionSet};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Partition set with every bit on: masking disabled.
    fn full_parts(widths: &[usize], tasks: usize) -> PartitionSet {
        PartitionSet::init(widths, tasks, 1.0, InitMode::Bernoulli, &mut rng(0)).unwrap()
    }

    fn hand_built_net() -> MaskedNetwork {
        MaskedNetwork {
            input_dim: 2,
            layers: vec![MaskedLayer {
                w: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
                b: vec![0.5, -0.5],
                activation: Activation::Identity,
            }],
            heads: vec![TaskHead { w: vec![1.0, 1.0], b: 0.0 }],
        }
    }

    #[test]
    fn unmasked_forward_matches_hand_computation() {
        let net = hand_built_net();
        let parts = full_parts(&[2], 1);
        // s = [1*1 + 2*1 + 0.5, 3*1 + 4*1 - 0.5] = [3.5, 6.5]; output 10.
        assert_eq!(net.output(&[1.0, 1.0], 0, &parts), 10.0);
    }

    #[test]
    fn masked_channel_outputs_zero_and_leaves_others_alone() {
        let net = hand_built_net();
        let full = full_parts(&[2], 1);
        let snap = {
            let mut s = full.snapshot();
            s[0].mask = vec![vec![0]]; // keep channel 0, drop channel 1
            s
        };
        let parts = PartitionSet::from_snapshot(&snap).unwrap();
        let cache = net.forward_task(&[1.0, 1.0], 0, &parts);
        assert_eq!(cache.activations[1], vec![3.5, 0.0]);
        assert_eq!(cache.output, 3.5);
    }

    #[test]
    fn relu_negative_preactivation_is_clamped() {
        let mut net = hand_built_net();
        net.layers[0].activation = Activation::Relu;
        let parts = full_parts(&[2], 1);
        // x = [-1, 0]: s = [-0.5, -3.5], both clamped; output is head bias.
        assert_eq!(net.output(&[-1.0, 0.0], 0, &parts), 0.0);
    }

    #[test]
    fn init_respects_fan_in_bounds_and_zero_biases() {
        let net = MaskedNetwork::init(9, &[16, 4], 3, &mut rng(5)).unwrap();
        assert_eq!(net.trunk_widths(), vec![16, 4]);
        assert_eq!(net.heads.len(), 3);
        let bound0 = 1.0 / 3.0;
        for row in &net.layers[0].w {
            assert!(row.iter().all(|w| w.abs() < bound0));
        }
        assert!(net.layers[0].b.iter().all(|&b| b == 0.0));
        let bound1 = 1.0 / 4.0;
        for row in &net.layers[1].w {
            assert!(row.iter().all(|w| w.abs() < bound1));
        }
        for head in &net.heads {
            assert!(head.w.iter().all(|w| w.abs() < 0.5));
            assert_eq!(head.b, 0.0);
        }
    }

    #[test]
    fn shape_checks_catch_mismatches() {
        let net = MaskedNetwork::init(4, &[6, 3], 2, &mut rng(1)).unwrap();
        assert!(net.check_shapes(&full_parts(&[6, 3], 2)).is_ok());
        assert!(net.check_shapes(&full_parts(&[6], 2)).is_err());
        assert!(net.check_shapes(&full_parts(&[6, 4], 2)).is_err());
        assert!(net.check_shapes(&full_parts(&[6, 3], 3)).is_err());
    }

    #[test]
    fn flat_roundtrip_preserves_every_parameter() {
        let net = MaskedNetwork::init(5, &[7, 4], 3, &mut rng(2)).unwrap();
        let flat = net.params_flat();
        assert_eq!(flat.len(), net.param_count());
        let mut other = MaskedNetwork::init(5, &[7, 4], 3, &mut rng(3)).unwrap();
        assert_ne!(other, net);
        other.set_params_flat(&flat);
        assert_eq!(other, net);
    }

    #[test]
    fn loss_values_and_gradients_match_closed_forms() {
        assert_eq!(LossKind::Squared.loss(3.0, 1.0), 4.0);
        assert_eq!(LossKind::Squared.grad(3.0, 1.0), 4.0);
        // BCE at z = 0 is ln 2 regardless of label; gradient is 0.5 - y.
        assert!((LossKind::Logistic.loss(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((LossKind::Logistic.grad(0.0, 1.0) + 0.5).abs() < 1e-15);
        // Large logits stay finite in the safe form.
        assert!(LossKind::Logistic.loss(1e3, 0.0).is_finite());
        assert!((LossKind::Logistic.loss(1e3, 0.0) - 1e3).abs() < 1e-9);
        assert!(LossKind::Logistic.loss(-1e3, 1.0).is_finite());
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.999);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        for z in [-3.0, -0.7, 0.2, 4.5] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
    }

    /// Central-difference gradient of the batch loss with respect to one
    /// flat parameter coordinate.
    fn numeric_grad(
        net: &MaskedNetwork,
        coord: usize,
        h: f64,
        task: usize,
        xs: &[Vec<f64>],
        ys: &[f64],
        loss: LossKind,
        parts: &PartitionSet,
    ) -> f64 {
        let base = net.params_flat();
        let eval = |delta: f64| {
            let mut p = base.clone();
            p[coord] += delta;
            let mut probe = net.clone();
            probe.set_params_flat(&p);
            let mut total = 0.0;
            for (x, &y) in xs.iter().zip(ys) {
                total += loss.loss(probe.output(x, task, parts), y);
            }
            total / xs.len() as f64
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for (seed, loss) in [(40, LossKind::Squared), (41, LossKind::Logistic)] {
            let mut r = rng(seed);
            let mut net = MaskedNetwork::init(3, &[5, 4], 2, &mut r).unwrap();
            // Nudge the biases away from their zero init: with b = 0 a fully
            // clamped hidden layer puts the next pre-activation exactly on
            // the ReLU kink, where a central difference reads slope 1/2 but
            // the derivative convention is 0.
            for layer in &mut net.layers {
                for b in &mut layer.b {
                    *b = r.gen_range(-0.1..0.1);
                }
            }
            let parts =
                PartitionSet::init(&[5, 4], 2, 0.5, InitMode::Bernoulli, &mut r).unwrap();
            let xs: Vec<Vec<f64>> =
                (0..6).map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
            let ys: Vec<f64> = (0..6).map(|_| r.gen_range(0.0..1.0)).collect();
            for task in 0..2 {
                let (_, grads) = net.batch_gradients(task, &xs, &ys, loss, &parts);
                let flat = grads.flat();
                for coord in 0..flat.len() {
                    // A step that lands a pre-activation within h of a kink
                    // corrupts the estimate; shrinking h moves the kink out
                    // of the stencil, so accept the first h that agrees.
                    let ok = [1e-5, 1e-6, 1e-7].iter().any(|&h| {
                        let numeric =
                            numeric_grad(&net, coord, h, task, &xs, &ys, loss, &parts);
                        let denom = flat[coord].abs().max(numeric.abs()).max(1e-8);
                        ((flat[coord] - numeric) / denom).abs() < 1e-4
                    });
                    assert!(
                        ok,
                        "seed {seed} task {task} coord {coord}: analytic {} disagrees with \
                         finite differences at every step size",
                        flat[coord]
                    );
                }
            }
        }
    }

    #[test]
    fn masked_channels_get_exactly_zero_gradients() {
        let mut r = rng(50);
        let net = MaskedNetwork::init(4, &[6, 5], 3, &mut r).unwrap();
        let parts = PartitionSet::init(&[6, 5], 3, 0.4, InitMode::Bernoulli, &mut r).unwrap();
        let xs: Vec<Vec<f64>> =
            (0..5).map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let ys = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        for task in 0..3 {
            let (_, grads) = net.batch_gradients(task, &xs, &ys, LossKind::Logistic, &parts);
            for d in 0..2 {
                let mask = parts.layer(d).task_mask(task);
                for (j, &owned) in mask.iter().enumerate() {
                    if owned {
                        continue;
                    }
                    assert!(
                        grads.layers[d].0[j].iter().all(|&g| g == 0.0),
                        "task {task} layer {d} channel {j}: masked weight row has gradient"
                    );
                    assert_eq!(grads.layers[d].1[j], 0.0);
                }
            }
            // Other tasks' heads are untouched.
            for (other, (dw, db)) in grads.heads.iter().enumerate() {
                if other != task {
                    assert!(dw.iter().all(|&g| g == 0.0));
                    assert_eq!(*db, 0.0);
                }
            }
        }
    }

    #[test]
    fn disjoint_tasks_train_without_cross_talk() {
        let mut r = rng(60);
        let net0 = MaskedNetwork::init(3, &[8, 6], 2, &mut r).unwrap();
        let parts = PartitionSet::init(&[8, 6], 2, 0.0, InitMode::Bernoulli, &mut r).unwrap();
        let xs: Vec<Vec<f64>> =
            (0..8).map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
        let probe: Vec<Vec<f64>> =
            (0..4).map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let before: Vec<f64> = probe.iter().map(|x| net0.output(x, 1, &parts)).collect();

        // Train task 0 alone for a while; task 1's function must not move.
        let mut net = net0.clone();
        let mut opt = Adam::new(1e-2, net.param_count());
        for _ in 0..25 {
            let (_, grads) = net.batch_gradients(0, &xs, &ys, LossKind::Squared, &parts);
            net.apply_gradients(&mut opt, &grads);
        }
        assert_ne!(net, net0, "training task 0 should move its own parameters");
        let after: Vec<f64> = probe.iter().map(|x| net.output(x, 1, &parts)).collect();
        assert_eq!(before, after, "task 1 outputs drifted under disjoint masks");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut r = rng(70);
        let mut net = MaskedNetwork::init(3, &[4], 1, &mut r).unwrap();
        let before = net.clone();
        let parts = full_parts(&[4], 1);
        let mut opt = Adam::new(0.0, net.param_count());
        let (_, grads) =
            net.batch_gradients(0, &[vec![0.3, -0.2, 0.9]], &[1.0], LossKind::Squared, &parts);
        net.apply_gradients(&mut opt, &grads);
        assert_eq!(net, before);
    }

    /// Plain unmasked MLP trained with its own plain Adam, as an oracle for
    /// the fully shared regime.
    struct PlainMlp {
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        v: Vec<f64>,
        c: f64,
    }

    impl PlainMlp {
        fn from_net(net: &MaskedNetwork) -> Self {
            PlainMlp {
                w1: net.layers[0].w.clone(),
                b1: net.layers[0].b.clone(),
                v: net.heads[0].w.clone(),
                c: net.heads[0].b,
            }
        }

        fn flat(&self) -> Vec<f64> {
            let mut out: Vec<f64> = self.w1.iter().flatten().copied().collect();
            out.extend_from_slice(&self.b1);
            out.extend_from_slice(&self.v);
            out.push(self.c);
            out
        }

        fn set_flat(&mut self, flat: &[f64]) {
            let mut it = flat.iter().copied();
            for row in &mut self.w1 {
                for w in row.iter_mut() {
                    *w = it.next().unwrap();
                }
            }
            for b in &mut self.b1 {
                *b = it.next().unwrap();
            }
            for v in &mut self.v {
                *v = it.next().unwrap();
            }
            self.c = it.next().unwrap();
        }

        /// Mean squared-error loss gradient over a batch, by hand.
        fn batch_grads(&self, xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
            let h = self.w1.len();
            let mut dw1 = vec![vec![0.0; self.w1[0].len()]; h];
            let mut db1 = vec![0.0; h];
            let mut dv = vec![0.0; h];
            let mut dc = 0.0;
            for (x, &y) in xs.iter().zip(ys) {
                let z: Vec<f64> = (0..h)
                    .map(|j| {
                        self.w1[j].iter().zip(x).map(|(w, p)| w * p).sum::<f64>() + self.b1[j]
                    })
                    .collect();
                let a: Vec<f64> = z.iter().map(|&z| z.max(0.0)).collect();
                let out = self.v.iter().zip(&a).map(|(v, a)| v * a).sum::<f64>() + self.c;
                let dout = 2.0 * (out - y);
                for j in 0..h {
                    dv[j] += dout * a[j];
                    let ds = dout * self.v[j] * if z[j] > 0.0 { 1.0 } else { 0.0 };
                    db1[j] += ds;
                    for (k, xv) in x.iter().enumerate() {
                        dw1[j][k] += ds * xv;
                    }
                }
                dc += dout;
            }
            let inv = 1.0 / xs.len() as f64;
            let mut flat: Vec<f64> = dw1.iter().flatten().map(|g| g * inv).collect();
            flat.extend(db1.iter().map(|g| g * inv));
            flat.extend(dv.iter().map(|g| g * inv));
            flat.push(dc * inv);
            flat
        }
    }

    #[test]
    fn full_sharing_reproduces_a_plain_mlp_trajectory_bit_for_bit() {
        let mut r = rng(80);
        let mut net = MaskedNetwork::init(4, &[6], 1, &mut r).unwrap();
        let parts = full_parts(&[6], 1);
        let mut oracle = PlainMlp::from_net(&net);
        let xs: Vec<Vec<f64>> =
            (0..10).map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] - 0.5 * x[2]).collect();

        let mut opt = Adam::new(1e-3, net.param_count());
        let mut oracle_opt = Adam::new(1e-3, oracle.flat().len());
        for _ in 0..50 {
            let (_, grads) = net.batch_gradients(0, &xs, &ys, LossKind::Squared, &parts);
            net.apply_gradients(&mut opt, &grads);
            let mut flat = oracle.flat();
            oracle_opt.step(&mut flat, &oracle.batch_grads(&xs, &ys));
            oracle.set_flat(&flat);
        }
        assert_eq!(net.params_flat(), oracle.flat());
    }

    #[test]
    fn training_reduces_loss_on_a_learnable_target() {
        let mut r = rng(90);
        let mut net = MaskedNetwork::init(4, &[16, 8], 1, &mut r).unwrap();
        let parts = full_parts(&[16, 8], 1);
        let xs: Vec<Vec<f64>> =
            (0..64).map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x[0] + x[1]).tanh()).collect();
        let mut opt = Adam::new(1e-2, net.param_count());
        let (initial, _) = net.batch_gradients(0, &xs, &ys, LossKind::Squared, &parts);
        for _ in 0..100 {
            let (_, grads) = net.batch_gradients(0, &xs, &ys, LossKind::Squared, &parts);
            net.apply_gradients(&mut opt, &grads);
        }
        let (fin, _) = net.batch_gradients(0, &xs, &ys, LossKind::Squared, &parts);
        assert!(
            fin < 0.2 * initial,
            "loss barely moved: {initial} -> {fin}"
        );
    }

    #[test]
    fn checkpoint_json_roundtrip_is_exact() {
        let mut r = rng(100);
        let net = MaskedNetwork::init(5, &[9, 3], 2, &mut r).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: MaskedNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);

        let mut opt = Adam::new(1e-3, net.param_count());
        let mut params = net.params_flat();
        let grads = vec![0.01; params.len()];
        opt.step(&mut params, &grads);
        let opt_json = serde_json::to_string(&opt).unwrap();
        let opt_back: Adam = serde_json::from_str(&opt_json).unwrap();
        assert_eq!(opt_back, opt);
    }

    #[test]
    fn channel_vectors_append_bias_to_rows() {
        let net = hand_built_net();
        let vecs = net.layers[0].channel_vectors();
        assert_eq!(vecs, vec![vec![1.0, 2.0, 0.5], vec![3.0, 4.0, -0.5]]);
    }
}
