//! Sequence augmentation from latent codes: an autoregressive step decoder
//! trained on extreme-region codes, greedy generation from scaled codes, and
//! a label-preservation audit for the scaled variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{infinity_norm, probability_to_label};
use crate::lhtr::{default_class_weights, sort_desc};
use crate::nn::{streams, Grads, Mlp, Mode, OptimConfig};
use crate::rng::RngStream;

/// Token id that seeds every decode. Never appears inside a sequence.
pub const START: usize = 0;
/// Token id that terminates a sequence.
pub const STOP: usize = 1;

pub const DECODER_FORMAT_VERSION: u32 = 1;

/// Hidden layout of the decoder step network built by [`train_decoder`].
const DECODER_HIDDEN: [usize; 1] = [64];

/// Token sequences paired with the embeddings they were derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceDataset {
    inputs: Vec<Vec<f64>>,
    sequences: Vec<Vec<usize>>,
    vocab: usize,
    t_max: usize,
}

impl SequenceDataset {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        sequences: Vec<Vec<usize>>,
        vocab: usize,
        t_max: usize,
    ) -> Result<Self> {
        if inputs.len() != sequences.len() {
            return Err(Error::dim("inputs and sequences must have equal length"));
        }
        if vocab < 2 {
            return Err(Error::invalid("vocabulary needs at least the start and stop tokens"));
        }
        if t_max == 0 {
            return Err(Error::invalid("t_max must be at least 1"));
        }
        let d = inputs.first().map_or(0, |x| x.len());
        if !inputs.is_empty() && d == 0 {
            return Err(Error::invalid("embeddings must have at least one coordinate"));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != d {
                return Err(Error::dim(format!("embedding {i} has {} coordinates, expected {d}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("embedding {i} contains a non-finite value")));
            }
        }
        for (i, s) in sequences.iter().enumerate() {
            if s.len() > t_max {
                return Err(Error::invalid(format!(
                    "sequence {i} has length {}, beyond t_max={t_max}",
                    s.len()
                )));
            }
            if let Some(&bad) = s.iter().find(|&&tok| tok >= vocab) {
                return Err(Error::invalid(format!("sequence {i} contains token {bad} outside the vocabulary")));
            }
            if s.contains(&START) {
                return Err(Error::invalid(format!("sequence {i} contains the reserved start token")));
            }
        }
        Ok(SequenceDataset { inputs, sequences, vocab, t_max })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SequenceDataset = serde_json::from_str(text)?;
        SequenceDataset::new(raw.inputs, raw.sequences, raw.vocab, raw.t_max)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Autoregressive decoder: one step network mapping a latent code
/// concatenated with the previous token's one-hot to next-token logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyDecoder {
    format_version: u32,
    step: Mlp,
    latent_dim: usize,
    vocab: usize,
    t_max: usize,
}

impl ToyDecoder {
    pub fn init(
        latent_dim: usize,
        hidden: &[usize],
        vocab: usize,
        t_max: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::invalid("latent dimension must be positive"));
        }
        if vocab < 2 {
            return Err(Error::invalid("vocabulary needs at least the start and stop tokens"));
        }
        if t_max == 0 {
            return Err(Error::invalid("t_max must be at least 1"));
        }
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(latent_dim + vocab);
        sizes.extend_from_slice(hidden);
        sizes.push(vocab);
        let step = Mlp::init(&sizes, Mode::Regressor, 0.0, rng)?;
        Ok(ToyDecoder { format_version: DECODER_FORMAT_VERSION, step, latent_dim, vocab, t_max })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn step_net(&self) -> &Mlp {
        &self.step
    }

    /// The step net sees each code coordinate through a sign-preserving log
    /// compression. Codes matched to a unit-Frechet-margin target span
    /// several orders of magnitude, and feeding them to the MLP raw makes
    /// plain SGD diverge on the extreme rows.
    fn step_input(&self, z: &[f64], prev: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.latent_dim + self.vocab);
        for &v in z {
            x.push(v.signum() * v.abs().ln_1p());
        }
        x.resize(self.latent_dim + self.vocab, 0.0);
        x[self.latent_dim + prev] = 1.0;
        x
    }

    /// Next-token logits given the code and the previously emitted token.
    pub fn step_logits(&self, z: &[f64], prev: usize) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::dim("latent code dimension mismatch"));
        }
        if prev >= self.vocab {
            return Err(Error::invalid(format!("token {prev} outside the vocabulary")));
        }
        Ok(self.step.forward(&self.step_input(z, prev)))
    }

    /// Teacher-forced logits for every position of `target`: position t is
    /// predicted from the true token at t-1 (the start token at t=0).
    pub fn teacher_logits(&self, z: &[f64], target: &[usize]) -> Result<Vec<Vec<f64>>> {
        if target.len() > self.t_max {
            return Err(Error::invalid(format!(
                "target has length {}, beyond t_max={}",
                target.len(),
                self.t_max
            )));
        }
        let mut prev = START;
        let mut out = Vec::with_capacity(target.len());
        for &tok in target {
            if tok >= self.vocab {
                return Err(Error::invalid(format!("token {tok} outside the vocabulary")));
            }
            out.push(self.step_logits(z, prev)?);
            prev = tok;
        }
        Ok(out)
    }

    /// Greedy decode: argmax token per step, starting from the start token,
    /// until the stop token is emitted or t_max tokens have been produced.
    pub fn decode_greedy(&self, z: &[f64]) -> Result<Vec<usize>> {
        let mut prev = START;
        let mut out = Vec::new();
        for _ in 0..self.t_max {
            let logits = self.step_logits(z, prev)?;
            let tok = argmax(&logits);
            out.push(tok);
            if tok == STOP {
                break;
            }
            prev = tok;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decoder serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dec: ToyDecoder = serde_json::from_str(text)?;
        if dec.format_version != DECODER_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported decoder format version {}", dec.format_version)));
        }
        if dec.step.input_dim() != dec.latent_dim + dec.vocab || dec.step.output_dim() != dec.vocab {
            return Err(Error::dim("decoder step network shape is inconsistent with its vocabulary"));
        }
        Ok(dec)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Number of positions that contribute to the loss: everything up to and
/// including the first stop token.
fn effective_len(target: &[usize]) -> usize {
    target.iter().position(|&tok| tok == STOP).map_or(target.len(), |p| p + 1)
}

/// Token negative log-likelihood -Σ_t log p(u_t) over the positions of
/// `target`, with positions past the first stop token excluded. `step_logits`
/// must hold one logit vector per target position.
pub fn sequence_nll(step_logits: &[Vec<f64>], target: &[usize], t_max: usize) -> Result<f64> {
    if target.len() > t_max {
        return Err(Error::invalid(format!("target has length {}, beyond t_max={t_max}", target.len())));
    }
    if step_logits.len() != target.len() {
        return Err(Error::dim("one logit vector per target position is required"));
    }
    let mut total = 0.0;
    for t in 0..effective_len(target) {
        let p = softmax(&step_logits[t]);
        let tok = target[t];
        if tok >= p.len() {
            return Err(Error::invalid(format!("token {tok} outside the vocabulary")));
        }
        total -= p[tok].ln();
    }
    Ok(total)
}

/// Loss of a decoder that spreads probability uniformly over `vocab` tokens
/// at each of `len` positions. The reference point for training progress.
pub fn uniform_nll(vocab: usize, len: usize) -> f64 {
    len as f64 * (vocab as f64).ln()
}

fn accumulate_sequence_grads(
    dec: &ToyDecoder,
    z: &[f64],
    target: &[usize],
    weight: f64,
    grads: &mut Grads,
) {
    let mut prev = START;
    for t in 0..effective_len(target) {
        let x = dec.step_input(z, prev);
        let trace = dec.step.forward_train(&x, None);
        let mut dlogit = softmax(trace.output());
        dlogit[target[t]] -= 1.0;
        dec.step.backward_into(&trace, &dlogit, weight, grads);
        prev = target[t];
    }
}

/// Trains a decoder on the extreme region of the encoder's codes. Each batch
/// is sorted by decreasing code norm and only the top ⌊κ·batch⌋ sequences
/// contribute, each weighted by ρ₁/⌊κ·batch⌋ with ρ₁ the extreme-region
/// class weight (1 when κ covers the whole dataset). The encoder is frozen.
pub fn train_decoder(
    encoder: &Mlp,
    data: &SequenceDataset,
    kappa: f64,
    optim: &OptimConfig,
    seed: u64,
) -> Result<ToyDecoder> {
    if data.is_empty() {
        return Err(Error::invalid("sequence dataset is empty"));
    }
    if encoder.input_dim() != data.dim() {
        return Err(Error::dim("encoder input dimension does not match the embeddings"));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::invalid("kappa must lie in (0, 1]"));
    }
    if optim.batch == 0 || optim.batch > data.len() {
        return Err(Error::invalid("batch size must be positive and at most the dataset size"));
    }
    let k = (kappa * optim.batch as f64).floor() as usize;
    if k == 0 {
        return Err(Error::invalid("kappa times the batch size leaves no extreme sequences"));
    }
    let n = data.len();
    let rho1 = if (kappa * n as f64).floor() as usize >= n {
        1.0
    } else {
        default_class_weights(n, kappa)?.0
    };
    let master = RngStream::new(seed);
    let mut init_rng = master.substream(streams::INIT_DECODER);
    let mut dec = ToyDecoder::init(
        encoder.output_dim(),
        &DECODER_HIDDEN,
        data.vocab(),
        data.t_max(),
        &mut init_rng,
    )?;
    let codes: Vec<Vec<f64>> = data.inputs().iter().map(|x| encoder.forward(x)).collect();
    let mut shuffle_rng = master.substream(streams::SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = Grads::zeros_like(&dec.step);
    let w = rho1 / k as f64;
    for _ in 0..optim.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks_exact(optim.batch) {
            let norms: Vec<f64> = chunk.iter().map(|&i| infinity_norm(&codes[i])).collect();
            let ranked = sort_desc(&norms);
            grads.reset();
            for &local in ranked.iter().take(k) {
                let i = chunk[local];
                accumulate_sequence_grads(&dec, &codes[i], &data.sequences()[i], w, &mut grads);
            }
            dec.step.sgd_step(&grads, optim.lr, optim.weight_decay);
        }
    }
    Ok(dec)
}

/// Mean teacher-forced loss over the ⌊κn⌋ largest-norm codes of the dataset.
pub fn mean_extreme_nll(
    dec: &ToyDecoder,
    encoder: &Mlp,
    data: &SequenceDataset,
    kappa: f64,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("sequence dataset is empty"));
    }
    let k = ((kappa * data.len() as f64).floor() as usize).min(data.len());
    if k == 0 {
        return Err(Error::invalid("kappa selects no sequences"));
    }
    let codes: Vec<Vec<f64>> = data.inputs().iter().map(|x| encoder.forward(x)).collect();
    let norms: Vec<f64> = codes.iter().map(|z| infinity_norm(z)).collect();
    let ranked = sort_desc(&norms);
    let mut total = 0.0;
    for &i in ranked.iter().take(k) {
        let logits = dec.teacher_logits(&codes[i], &data.sequences()[i])?;
        total += sequence_nll(&logits, &data.sequences()[i], data.t_max())?;
    }
    Ok(total / k as f64)
}

/// Ten equally spaced scale factors spanning [1, 1.5].
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10).map(|i| 1.0 + 0.5 * i as f64 / 9.0).collect()
}

pub(crate) fn check_lambdas(lambdas: &[f64]) -> Result<()> {
    for &l in lambdas {
        if !l.is_finite() || l < 1.0 {
            return Err(Error::invalid(format!("scale factor {l} must be a finite value >= 1")));
        }
    }
    Ok(())
}

/// Greedy-decodes one sequence per scale factor from the code of `x`. Codes
/// below the tail threshold are rejected unless `force` is set, in which case
/// a warning is printed and generation proceeds.
pub fn generate_scaled(
    dec: &ToyDecoder,
    encoder: &Mlp,
    threshold: f64,
    x: &[f64],
    lambdas: &[f64],
    force: bool,
) -> Result<Vec<Vec<usize>>> {
    check_lambdas(lambdas)?;
    let z = encoder.forward(x);
    if z.len() != dec.latent_dim() {
        return Err(Error::dim("encoder output dimension does not match the decoder"));
    }
    let norm = infinity_norm(&z);
    if norm < threshold {
        if force {
            eprintln!("warning: code norm {norm} is below the tail threshold {threshold}; scaling a bulk point");
        } else {
            return Err(Error::invalid(format!(
                "code norm {norm} is below the tail threshold {threshold}"
            )));
        }
    }
    let mut out = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let scaled: Vec<f64> = z.iter().map(|&v| l * v).collect();
        out.push(dec.decode_greedy(&scaled)?);
    }
    Ok(out)
}

/// Fraction of (point, λ) pairs whose classifier label at the scaled code
/// λ·φ(x) agrees with the label at φ(x).
pub fn label_preservation_audit(
    c_ext: &Mlp,
    encoder: &Mlp,
    points: &[Vec<f64>],
    lambdas: &[f64],
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("no points to audit"));
    }
    if lambdas.is_empty() {
        return Err(Error::invalid("no scale factors to audit"));
    }
    check_lambdas(lambdas)?;
    let mut agree = 0usize;
    for x in points {
        let z = encoder.forward(x);
        let base = probability_to_label(c_ext.forward(&z)[0]);
        for &l in lambdas {
            let scaled: Vec<f64> = z.iter().map(|&v| l * v).collect();
            if probability_to_label(c_ext.forward(&scaled)[0]) == base {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (points.len() * lambdas.len()) as f64)
}
