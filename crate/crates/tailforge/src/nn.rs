//! Minimal dense feed-forward networks with exact analytic gradients.
//!
//! Hidden layers use the rectifier; the head is sigmoid for classifiers and
//! identity for regressors. Training is plain SGD with decoupled weight decay
//! (weights only, biases undecayed). Inverted dropout can be enabled on hidden
//! activations during training. Everything is deterministic given the seed:
//! two runs with identical seeds, data order, and config produce bitwise
//! identical parameters.
//!
//! The backward pass works at the logit level: callers supply dLoss/dz for the
//! final linear output. For binary cross-entropy through the sigmoid head that
//! gradient is simply `p - y`, which stays finite even when the head
//! saturates.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Classifier outputs are clamped to [EPS, 1-EPS] so losses stay finite.
pub const CLAMP_EPS: f64 = 1e-7;

const FORMAT_VERSION: u32 = 1;

/// Substream labels used by every trainer in the crate, so that independent
/// consumers of randomness never interleave and ablations line up exactly.
pub mod streams {
    pub const INIT_ENCODER: u64 = 1;
    pub const INIT_HEAD: u64 = 2;
    pub const INIT_BULK_HEAD: u64 = 3;
    pub const INIT_DISCRIMINATOR: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const PRIOR: u64 = 7;
    pub const INIT_DECODER: u64 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classifier,
    Regressor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Layer {
    /// Row-major weights, fan_out rows of fan_in entries.
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    format_version: u32,
    sizes: Vec<usize>,
    mode: Mode,
    dropout: f64,
    layers: Vec<Layer>,
}

/// Optimization settings shared by all trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { lr: 5e-4, weight_decay: 1e-5, batch: 64, epochs: 100 }
    }
}

/// Gradient accumulator congruent to an Mlp's parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    layers: Vec<Layer>,
}

/// Per-sample forward trace kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// acts[0] is the input, acts[l] the post-dropout hidden activation,
    /// acts[L] the final logit vector.
    acts: Vec<Vec<f64>>,
    /// Dropout multipliers per hidden layer (empty vectors when disabled).
    masks: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn logit(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Mlp {
    /// Fresh network with symmetric scaled-uniform weights
    /// (limit sqrt(6/(fan_in+fan_out))) and zero biases.
    pub fn init(sizes: &[usize], mode: Mode, dropout: f64, rng: &mut RngStream) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output sizes"));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0,1), got {dropout}")));
        }
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_in(-limit, limit))
                    .collect();
                Layer { w, b: vec![0.0; fan_out] }
            })
            .collect();
        Ok(Mlp { format_version: FORMAT_VERSION, sizes: sizes.to_vec(), mode, dropout, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Inference pass: no dropout, deterministic.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_traced(x, None).output
    }

    /// Training pass. Dropout masks are drawn from `dropout_rng` when the
    /// network has a positive dropout rate; pass None for a clean pass.
    pub fn forward_train(&self, x: &[f64], dropout_rng: Option<&mut RngStream>) -> Trace {
        self.forward_traced(x, dropout_rng)
    }

    fn forward_traced(&self, x: &[f64], mut dropout_rng: Option<&mut RngStream>) -> Trace {
        assert_eq!(x.len(), self.sizes[0], "input dimension mismatch");
        let n_layers = self.layers.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut masks = Vec::with_capacity(n_layers.saturating_sub(1));
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = &acts[l];
            let fan_in = self.sizes[l];
            let fan_out = self.sizes[l + 1];
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &layer.w[o * fan_in..(o + 1) * fan_in];
                let mut acc = layer.b[o];
                for (wi, pi) in row.iter().zip(prev.iter()) {
                    acc += wi * pi;
                }
                z[o] = acc;
            }
            if l + 1 < n_layers {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
                if self.dropout > 0.0 {
                    if let Some(rng) = dropout_rng.as_deref_mut() {
                        let keep = 1.0 / (1.0 - self.dropout);
                        let mask: Vec<f64> = (0..z.len())
                            .map(|_| if rng.uniform() >= self.dropout { keep } else { 0.0 })
                            .collect();
                        for (v, m) in z.iter_mut().zip(mask.iter()) {
                            *v *= m;
                        }
                        masks.push(mask);
                    } else {
                        masks.push(Vec::new());
                    }
                } else {
                    masks.push(Vec::new());
                }
            }
            acts.push(z);
        }
        let logit = acts.last().unwrap();
        let output = match self.mode {
            Mode::Regressor => logit.clone(),
            Mode::Classifier => logit
                .iter()
                .map(|&z| sigmoid(z).clamp(CLAMP_EPS, 1.0 - CLAMP_EPS))
                .collect(),
        };
        Trace { acts, masks, output }
    }

    /// Backpropagates one sample. `dlogit` is dLoss/dz at the final linear
    /// output; the contribution is scaled by `weight` and accumulated into
    /// `grads`. Returns dLoss/dinput (already scaled), for chaining into an
    /// upstream network.
    pub fn backward_into(
        &self,
        trace: &Trace,
        dlogit: &[f64],
        weight: f64,
        grads: &mut Grads,
    ) -> Vec<f64> {
        assert_eq!(dlogit.len(), self.output_dim(), "logit gradient dimension mismatch");
        let n_layers = self.layers.len();
        let mut delta: Vec<f64> = dlogit.iter().map(|&d| d * weight).collect();
        for l in (0..n_layers).rev() {
            let fan_in = self.sizes[l];
            let fan_out = self.sizes[l + 1];
            let prev = &trace.acts[l];
            let g = &mut grads.layers[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut g.w[o * fan_in..(o + 1) * fan_in];
                    for (gw, pi) in row.iter_mut().zip(prev.iter()) {
                        *gw += d * pi;
                    }
                }
                g.b[o] += d;
            }
            let mut dprev = vec![0.0; fan_in];
            let layer = &self.layers[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &layer.w[o * fan_in..(o + 1) * fan_in];
                    for (dp, wi) in dprev.iter_mut().zip(row.iter()) {
                        *dp += d * wi;
                    }
                }
            }
            if l > 0 {
                let act = &trace.acts[l];
                let mask = &trace.masks[l - 1];
                for (i, dp) in dprev.iter_mut().enumerate() {
                    if !mask.is_empty() {
                        *dp *= mask[i];
                    }
                    if act[i] <= 0.0 {
                        *dp = 0.0;
                    }
                }
            }
            delta = dprev;
        }
        delta
    }

    /// One SGD step with decoupled weight decay (applied to weights only).
    pub fn sgd_step(&mut self, grads: &Grads, lr: f64, weight_decay: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads.layers.iter()) {
            for (w, gw) in layer.w.iter_mut().zip(g.w.iter()) {
                *w -= lr * gw + lr * weight_decay * *w;
            }
            for (b, gb) in layer.b.iter_mut().zip(g.b.iter()) {
                *b -= lr * gb;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter vector length mismatch");
        let mut i = 0;
        for layer in &mut self.layers {
            let nw = layer.w.len();
            layer.w.copy_from_slice(&params[i..i + nw]);
            i += nw;
            let nb = layer.b.len();
            layer.b.copy_from_slice(&params[i..i + nb]);
            i += nb;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mlp serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mlp: Mlp = serde_json::from_str(text)?;
        if mlp.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                mlp.format_version
            )));
        }
        if mlp.sizes.len() < 2 || mlp.layers.len() != mlp.sizes.len() - 1 {
            return Err(Error::invalid("model layer structure inconsistent with sizes"));
        }
        for (l, layer) in mlp.layers.iter().enumerate() {
            if layer.w.len() != mlp.sizes[l] * mlp.sizes[l + 1] || layer.b.len() != mlp.sizes[l + 1]
            {
                return Err(Error::invalid(format!("layer {l} has wrong parameter arity")));
            }
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {l} contains non-finite parameters")));
            }
        }
        Ok(mlp)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Mlp::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Grads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Grads {
            layers: mlp
                .layers
                .iter()
                .map(|l| Layer { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for layer in &mut self.layers {
            layer.w.iter_mut().for_each(|v| *v = 0.0);
            layer.b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }
}

/// Binary cross-entropy for a single probability/target pair.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// dBCE/dlogit through the sigmoid head: exactly p - y.
pub fn bce_grad_logit(p: f64, y: f64) -> f64 {
    p - y
}

/// Central finite-difference check of an analytic gradient. `loss` is
/// re-evaluated at perturbed parameters; returns the maximum relative error
/// over all parameters, with denominators floored at 1e-6.
pub fn finite_difference_check<F>(mlp: &Mlp, analytic: &Grads, mut loss: F, step: f64) -> f64
where
    F: FnMut(&Mlp) -> f64,
{
    let base = mlp.params_flat();
    let grad = analytic.flat();
    let mut probe = mlp.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut params = base.clone();
        params[i] = base[i] + step;
        probe.set_params_flat(&params);
        let up = loss(&probe);
        params[i] = base[i] - step;
        probe.set_params_flat(&params);
        let down = loss(&probe);
        let fd = (up - down) / (2.0 * step);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Plain supervised training of a single classifier on 0/1 targets.
/// Batches whose size would fall below `cfg.batch` at the end of an epoch are
/// skipped; reshuffling makes every sample participate across epochs.
pub fn train_classifier(
    net: &mut Mlp,
    inputs: &[Vec<f64>],
    targets01: &[f64],
    cfg: &OptimConfig,
    seed: u64,
) -> Result<()> {
    if inputs.len() != targets01.len() {
        return Err(Error::dim("inputs and targets must have equal length"));
    }
    if inputs.len() < cfg.batch || cfg.batch == 0 {
        return Err(Error::invalid("batch size must be positive and at most the dataset size"));
    }
    let master = RngStream::new(seed);
    let mut shuffle_rng = master.substream(streams::SHUFFLE);
    let mut dropout_rng = master.substream(streams::DROPOUT);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut grads = Grads::zeros_like(net);
    let w = 1.0 / cfg.batch as f64;
    for _ in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks_exact(cfg.batch) {
            grads.reset();
            for &i in chunk {
                let trace = net.forward_train(&inputs[i], Some(&mut dropout_rng));
                let d = [bce_grad_logit(trace.output()[0], targets01[i])];
                net.backward_into(&trace, &d, w, &mut grads);
            }
            net.sgd_step(&grads, cfg.lr, cfg.weight_decay);
        }
    }
    Ok(())
}

/// Supervised training of a classifier head on top of an encoder. Within each
/// batch the head is stepped first, then the encoder is stepped against the
/// refreshed head. This is the exact update rule the adversarial trainer
/// reduces to when the adversary is disabled.
pub fn train_encoder_classifier(
    encoder: &mut Mlp,
    head: &mut Mlp,
    inputs: &[Vec<f64>],
    targets01: &[f64],
    cfg: &OptimConfig,
    seed: u64,
) -> Result<()> {
    if inputs.len() != targets01.len() {
        return Err(Error::dim("inputs and targets must have equal length"));
    }
    if inputs.len() < cfg.batch || cfg.batch == 0 {
        return Err(Error::invalid("batch size must be positive and at most the dataset size"));
    }
    let master = RngStream::new(seed);
    let mut shuffle_rng = master.substream(streams::SHUFFLE);
    let mut dropout_rng = master.substream(streams::DROPOUT);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut head_grads = Grads::zeros_like(head);
    let mut enc_grads = Grads::zeros_like(encoder);
    let w = 1.0 / cfg.batch as f64;
    for _ in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks_exact(cfg.batch) {
            let enc_traces: Vec<Trace> = chunk
                .iter()
                .map(|&i| encoder.forward_train(&inputs[i], Some(&mut dropout_rng)))
                .collect();
            head_grads.reset();
            for (&i, tr) in chunk.iter().zip(enc_traces.iter()) {
                let ht = head.forward_train(tr.output(), Some(&mut dropout_rng));
                let d = [bce_grad_logit(ht.output()[0], targets01[i])];
                head.backward_into(&ht, &d, w, &mut head_grads);
            }
            head.sgd_step(&head_grads, cfg.lr, cfg.weight_decay);
            enc_grads.reset();
            for (&i, tr) in chunk.iter().zip(enc_traces.iter()) {
                let ht = head.forward_train(tr.output(), Some(&mut dropout_rng));
                let d = [bce_grad_logit(ht.output()[0], targets01[i])];
                let mut head_sink = Grads::zeros_like(head);
                let dz = head.backward_into(&ht, &d, w, &mut head_sink);
                encoder.backward_into(tr, &dz, 1.0, &mut enc_grads);
            }
            encoder.sgd_step(&enc_grads, cfg.lr, cfg.weight_decay);
        }
    }
    Ok(())
}
