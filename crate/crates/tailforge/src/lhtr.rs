//! Adversarial training of a heavy-tailed latent representation.
//!
//! The trainer couples four networks: an encoder φ that maps inputs to a
//! low-dimensional code, two classification heads specialised to the extreme
//! and bulk regions of the code space, and a discriminator that pushes the
//! code distribution toward a multivariate logistic target. Every mini-batch
//! performs, in order, a discriminator ascent, a descent for each head on its
//! own slice of the batch (the ⌊κm⌋ largest codes by sup-norm go to the
//! extreme head), and an encoder descent on the sum of the adversarial and
//! classification terms. After the epoch budget is exhausted the full
//! training set is encoded once more and the ⌊κn⌋-th largest code norm
//! becomes the radial threshold that routes prediction between the heads.
//!
//! A single-head variant trains one shared classifier on both slices while
//! keeping the per-slice weighting; it serves as the ablation baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{infinity_norm, label_to_target, probability_to_label, tail_threshold, LabeledDataset, TailThreshold};
use crate::heavy_tails::{sample_logistic, LogisticParams};
use crate::nn::{bce_grad_logit, bce_loss, streams, Grads, Mlp, Mode, OptimConfig};
use crate::rng::RngStream;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Head layout: dedicated extreme and bulk classifiers, or one classifier
/// shared by both regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    TwoHead,
    SingleHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhtrConfig {
    /// Encoder layer sizes; the last entry is the code dimension.
    pub encoder_sizes: Vec<usize>,
    /// Classifier head sizes, shared by the extreme and bulk heads.
    pub classifier_sizes: Vec<usize>,
    pub discriminator_sizes: Vec<usize>,
    /// Logistic target the discriminator compares codes against.
    pub target: LogisticParams,
    /// Fraction of each batch (and of the final training set) treated as
    /// extreme.
    pub kappa: f64,
    /// Weight on the extreme-head loss; None selects the realized-fraction
    /// default at training time.
    pub rho1: Option<f64>,
    /// Weight on the bulk-head loss; None selects the default.
    pub rho2: Option<f64>,
    /// Weight on the adversarial term. Zero disables the discriminator
    /// entirely.
    pub rho3: f64,
    pub optim: OptimConfig,
    pub dropout: f64,
    pub mode: HeadMode,
}

impl LhtrConfig {
    /// Two-dimensional demo setting: tiny networks, a strong adversary, and
    /// a learning rate high enough to reorganize the code geometry within
    /// 400 epochs.
    pub fn toy(input_dim: usize) -> Self {
        LhtrConfig {
            encoder_sizes: vec![input_dim, 4, 2],
            classifier_sizes: vec![2, 8, 1],
            discriminator_sizes: vec![2, 8, 1],
            target: LogisticParams::new(0.9, 2).unwrap(),
            kappa: 0.25,
            rho1: None,
            rho2: None,
            rho3: 1.0,
            optim: OptimConfig { lr: 1e-2, weight_decay: 1e-5, batch: 64, epochs: 400 },
            dropout: 0.0,
            mode: HeadMode::TwoHead,
        }
    }

    /// Preset for sentence-embedding inputs at moderate dataset sizes.
    pub fn small(input_dim: usize) -> Self {
        LhtrConfig {
            encoder_sizes: vec![input_dim, 384, 200, 150],
            classifier_sizes: vec![150, 75, 8, 1],
            discriminator_sizes: vec![150, 75, 8, 1],
            target: LogisticParams::new(0.9, 150).unwrap(),
            kappa: 0.25,
            rho1: None,
            rho2: None,
            rho3: 1e-3,
            optim: OptimConfig { lr: 5e-4, weight_decay: 1e-5, batch: 64, epochs: 500 },
            dropout: 0.0,
            mode: HeadMode::TwoHead,
        }
    }

    /// Preset for large datasets: same architecture as `small` with bigger
    /// batches, a lower learning rate, and a stronger adversary.
    pub fn large(input_dim: usize) -> Self {
        LhtrConfig {
            encoder_sizes: vec![input_dim, 384, 200, 150],
            classifier_sizes: vec![150, 75, 8, 1],
            discriminator_sizes: vec![150, 75, 8, 1],
            target: LogisticParams::new(0.9, 150).unwrap(),
            kappa: 0.25,
            rho1: None,
            rho2: None,
            rho3: 0.01,
            optim: OptimConfig { lr: 1e-4, weight_decay: 1e-5, batch: 256, epochs: 500 },
            dropout: 0.0,
            mode: HeadMode::TwoHead,
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder_sizes.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_sizes.len() < 2 {
            return Err(Error::invalid("encoder needs at least input and output sizes"));
        }
        let d = self.latent_dim();
        for (name, sizes) in [("classifier", &self.classifier_sizes), ("discriminator", &self.discriminator_sizes)] {
            if sizes.len() < 2 {
                return Err(Error::invalid(format!("{name} needs at least input and output sizes")));
            }
            if sizes[0] != d {
                return Err(Error::dim(format!(
                    "{name} input size {} does not match code dimension {d}",
                    sizes[0]
                )));
            }
            if *sizes.last().unwrap() != 1 {
                return Err(Error::invalid(format!("{name} must end in a single output unit")));
            }
        }
        if self.target.dim() != d {
            return Err(Error::dim(format!(
                "logistic target dimension {} does not match code dimension {d}",
                self.target.dim()
            )));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid(format!("kappa must lie in (0,1), got {}", self.kappa)));
        }
        if (self.kappa * self.optim.batch as f64).floor() < 1.0 {
            return Err(Error::invalid(format!(
                "batch size {} holds no extreme samples at kappa {}",
                self.optim.batch, self.kappa
            )));
        }
        if !(self.rho3 >= 0.0 && self.rho3.is_finite()) {
            return Err(Error::invalid(format!("rho3 must be finite and nonnegative, got {}", self.rho3)));
        }
        for (name, rho) in [("rho1", self.rho1), ("rho2", self.rho2)] {
            if let Some(r) = rho {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::invalid(format!("{name} must be positive, got {r}")));
                }
            }
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(Error::invalid(format!("dropout must lie in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Class weights from the realized extreme fraction κ̂ = ⌊κn⌋/n: the extreme
/// head gets (1-κ̂)⁻¹ and the bulk head κ̂⁻¹. With these values every sample
/// in a batch carries the same effective weight regardless of which side of
/// the split it lands on.
pub fn default_class_weights(n: usize, kappa: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("empty dataset has no extreme fraction"));
    }
    let k = (kappa * n as f64).floor();
    let hat = k / n as f64;
    if hat <= 0.0 || hat >= 1.0 {
        return Err(Error::degenerate(format!(
            "realized extreme fraction {hat} leaves one region empty (n={n}, kappa={kappa})"
        )));
    }
    Ok((1.0 / (1.0 - hat), 1.0 / hat))
}

/// Value of the adversarial objective (ρ₃/m) Σ [log D(zᵢ) + log(1 − D(z̃ᵢ))]
/// on a paired batch of prior draws and encoded codes. Discriminator outputs
/// are clamped away from {0,1} by the network itself, so the logs are finite.
pub fn discriminator_objective(
    disc: &Mlp,
    rho3: f64,
    prior: &[Vec<f64>],
    encoded: &[Vec<f64>],
) -> Result<f64> {
    if prior.is_empty() || prior.len() != encoded.len() {
        return Err(Error::invalid("prior and encoded batches must be nonempty and equally sized"));
    }
    let mut sum = 0.0;
    for z in prior {
        sum += disc.forward(z)[0].ln();
    }
    for z in encoded {
        sum += (1.0 - disc.forward(z)[0]).ln();
    }
    Ok(rho3 / prior.len() as f64 * sum)
}

/// Losses observed while processing one batch, each recorded at the moment
/// the corresponding update is computed.
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    /// Adversarial objective on this batch before the discriminator step;
    /// zero when the adversary is disabled.
    pub disc_objective: f64,
    /// (ρ₁/⌊κm⌋) Σ extreme-slice BCE before the head step.
    pub ext_loss: f64,
    /// (ρ₂/(m−⌊κm⌋)) Σ bulk-slice BCE before the head step.
    pub bulk_loss: f64,
    /// (ρ₃/m) Σ −log D(z̃) as seen by the encoder step.
    pub adversarial: f64,
}

/// Mutable training state: the four networks plus the random streams that
/// feed dropout masks and prior draws.
pub struct LhtrTrainer {
    cfg: LhtrConfig,
    rho1: f64,
    rho2: f64,
    encoder: Mlp,
    c_ext: Mlp,
    c_bulk: Option<Mlp>,
    disc: Mlp,
    prior_rng: RngStream,
    dropout_rng: RngStream,
}

impl LhtrTrainer {
    /// Fresh networks initialised from labelled substreams of `seed`.
    /// `class_weights` are the resolved (ρ₁, ρ₂) pair.
    pub fn new(cfg: &LhtrConfig, class_weights: (f64, f64), seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (rho1, rho2) = class_weights;
        if !(rho1 > 0.0 && rho2 > 0.0) {
            return Err(Error::invalid("class weights must be positive"));
        }
        let master = RngStream::new(seed);
        let encoder = Mlp::init(
            &cfg.encoder_sizes,
            Mode::Regressor,
            cfg.dropout,
            &mut master.substream(streams::INIT_ENCODER),
        )?;
        let c_ext = Mlp::init(
            &cfg.classifier_sizes,
            Mode::Classifier,
            cfg.dropout,
            &mut master.substream(streams::INIT_HEAD),
        )?;
        let c_bulk = match cfg.mode {
            HeadMode::TwoHead => Some(Mlp::init(
                &cfg.classifier_sizes,
                Mode::Classifier,
                cfg.dropout,
                &mut master.substream(streams::INIT_BULK_HEAD),
            )?),
            HeadMode::SingleHead => None,
        };
        let disc = Mlp::init(
            &cfg.discriminator_sizes,
            Mode::Classifier,
            cfg.dropout,
            &mut master.substream(streams::INIT_DISCRIMINATOR),
        )?;
        Ok(LhtrTrainer {
            cfg: cfg.clone(),
            rho1,
            rho2,
            encoder,
            c_ext,
            c_bulk,
            disc,
            prior_rng: master.substream(streams::PRIOR),
            dropout_rng: master.substream(streams::DROPOUT),
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.disc
    }

    /// One full update on the batch given by `batch_idx`: discriminator
    /// ascent, head descents on the extreme/bulk split of the encoded batch,
    /// then encoder descent against the refreshed heads and discriminator.
    pub fn step(&mut self, data: &LabeledDataset, batch_idx: &[usize]) -> Result<StepMetrics> {
        let m = batch_idx.len();
        let k = (self.cfg.kappa * m as f64).floor() as usize;
        if k == 0 || k >= m {
            return Err(Error::invalid(format!(
                "batch of {m} splits into {k} extreme samples at kappa {}",
                self.cfg.kappa
            )));
        }
        let lr = self.cfg.optim.lr;
        let wd = self.cfg.optim.weight_decay;
        let rho3 = self.cfg.rho3;

        let traces: Vec<_> = batch_idx
            .iter()
            .map(|&i| self.encoder.forward_train(&data.points()[i], Some(&mut self.dropout_rng)))
            .collect();
        let targets: Vec<f64> =
            batch_idx.iter().map(|&i| label_to_target(data.labels()[i])).collect();

        let mut disc_objective = 0.0;
        if rho3 > 0.0 {
            let prior = sample_logistic(&self.cfg.target, m, &mut self.prior_rng);
            let mut grads = Grads::zeros_like(&self.disc);
            let w = 1.0 / m as f64;
            let mut sum = 0.0;
            for z in &prior {
                let tr = self.disc.forward_train(z, Some(&mut self.dropout_rng));
                let p = tr.output()[0];
                sum += p.ln();
                self.disc.backward_into(&tr, &[p - 1.0], w, &mut grads);
            }
            for tr_enc in &traces {
                let tr = self.disc.forward_train(tr_enc.output(), Some(&mut self.dropout_rng));
                let p = tr.output()[0];
                sum += (1.0 - p).ln();
                self.disc.backward_into(&tr, &[p], w, &mut grads);
            }
            disc_objective = rho3 * w * sum;
            self.disc.sgd_step(&grads, lr, wd);
        }

        let norms: Vec<f64> = traces.iter().map(|tr| infinity_norm(tr.output())).collect();
        let order = sort_desc(&norms);
        let mut is_ext = vec![false; m];
        for &i in &order[..k] {
            is_ext[i] = true;
        }
        let w_ext = self.rho1 / k as f64;
        let w_bulk = self.rho2 / (m - k) as f64;

        let mut ext_loss = 0.0;
        let mut bulk_loss = 0.0;
        match self.cfg.mode {
            HeadMode::TwoHead => {
                let mut grads = Grads::zeros_like(&self.c_ext);
                for &i in &order[..k] {
                    let tr = self.c_ext.forward_train(traces[i].output(), Some(&mut self.dropout_rng));
                    let p = tr.output()[0];
                    ext_loss += bce_loss(p, targets[i]);
                    self.c_ext.backward_into(&tr, &[bce_grad_logit(p, targets[i])], w_ext, &mut grads);
                }
                self.c_ext.sgd_step(&grads, lr, wd);
                let bulk = self.c_bulk.as_mut().unwrap();
                let mut grads = Grads::zeros_like(bulk);
                for &i in &order[k..] {
                    let tr = bulk.forward_train(traces[i].output(), Some(&mut self.dropout_rng));
                    let p = tr.output()[0];
                    bulk_loss += bce_loss(p, targets[i]);
                    bulk.backward_into(&tr, &[bce_grad_logit(p, targets[i])], w_bulk, &mut grads);
                }
                bulk.sgd_step(&grads, lr, wd);
            }
            HeadMode::SingleHead => {
                let mut grads = Grads::zeros_like(&self.c_ext);
                for i in 0..m {
                    let tr = self.c_ext.forward_train(traces[i].output(), Some(&mut self.dropout_rng));
                    let p = tr.output()[0];
                    let w = if is_ext[i] {
                        ext_loss += bce_loss(p, targets[i]);
                        w_ext
                    } else {
                        bulk_loss += bce_loss(p, targets[i]);
                        w_bulk
                    };
                    self.c_ext.backward_into(&tr, &[bce_grad_logit(p, targets[i])], w, &mut grads);
                }
                self.c_ext.sgd_step(&grads, lr, wd);
            }
        }
        ext_loss *= w_ext;
        bulk_loss *= w_bulk;

        let mut enc_grads = Grads::zeros_like(&self.encoder);
        let mut disc_sink = Grads::zeros_like(&self.disc);
        let mut head_sink = Grads::zeros_like(&self.c_ext);
        let mut adversarial = 0.0;
        let w_adv = rho3 / m as f64;
        for i in 0..m {
            let z = traces[i].output().to_vec();
            let mut dz = vec![0.0; z.len()];
            if rho3 > 0.0 {
                let tr = self.disc.forward_train(&z, Some(&mut self.dropout_rng));
                let p = tr.output()[0];
                adversarial -= w_adv * p.ln();
                let dd = self.disc.backward_into(&tr, &[p - 1.0], w_adv, &mut disc_sink);
                for (a, b) in dz.iter_mut().zip(dd.iter()) {
                    *a += b;
                }
            }
            let (head, w) = match self.cfg.mode {
                HeadMode::TwoHead if !is_ext[i] => (self.c_bulk.as_ref().unwrap(), w_bulk),
                _ if is_ext[i] => (&self.c_ext, w_ext),
                _ => (&self.c_ext, w_bulk),
            };
            let tr = head.forward_train(&z, Some(&mut self.dropout_rng));
            let d = bce_grad_logit(tr.output()[0], targets[i]);
            let dh = head.backward_into(&tr, &[d], w, &mut head_sink);
            for (a, b) in dz.iter_mut().zip(dh.iter()) {
                *a += b;
            }
            self.encoder.backward_into(&traces[i], &dz, 1.0, &mut enc_grads);
        }
        self.encoder.sgd_step(&enc_grads, lr, wd);

        Ok(StepMetrics { disc_objective, ext_loss, bulk_loss, adversarial })
    }

    /// Encodes `points` in inference mode, fixes the radial threshold at the
    /// ⌊κn⌋-th largest code norm, and assembles the finished model. In
    /// single-head mode both routing targets hold the shared classifier.
    pub fn finish(self, points: &[Vec<f64>]) -> Result<LhtrModel> {
        let norms: Vec<f64> = points.iter().map(|x| infinity_norm(&self.encoder.forward(x))).collect();
        let threshold = tail_threshold(&norms, self.cfg.kappa)?;
        let c_bulk = match self.c_bulk {
            Some(net) => net,
            None => self.c_ext.clone(),
        };
        Ok(LhtrModel {
            format_version: MODEL_FORMAT_VERSION,
            encoder: self.encoder,
            c_ext: self.c_ext,
            c_bulk,
            discriminator: self.disc,
            threshold,
            config: self.cfg,
        })
    }
}

pub(crate) fn sort_desc(norms: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Runs the full training schedule and returns the finished model. Batches
/// are drawn by shuffling each epoch; a trailing partial batch is skipped.
pub fn train_lhtr(data: &LabeledDataset, cfg: &LhtrConfig, seed: u64) -> Result<LhtrModel> {
    cfg.validate()?;
    if data.dim() != cfg.encoder_sizes[0] {
        return Err(Error::dim(format!(
            "dataset dimension {} does not match encoder input {}",
            data.dim(),
            cfg.encoder_sizes[0]
        )));
    }
    if data.len() < cfg.optim.batch {
        return Err(Error::invalid(format!(
            "dataset of {} cannot fill a batch of {}",
            data.len(),
            cfg.optim.batch
        )));
    }
    let weights = match (cfg.rho1, cfg.rho2) {
        (Some(r1), Some(r2)) => (r1, r2),
        (r1, r2) => {
            let (d1, d2) = default_class_weights(data.len(), cfg.kappa)?;
            (r1.unwrap_or(d1), r2.unwrap_or(d2))
        }
    };
    let mut trainer = LhtrTrainer::new(cfg, weights, seed)?;
    let master = RngStream::new(seed);
    let mut shuffle_rng = master.substream(streams::SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.optim.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks_exact(cfg.optim.batch) {
            trainer.step(data, chunk)?;
        }
    }
    trainer.finish(data.points())
}

/// Trained representation model: encoder, routing threshold, and the two
/// classification heads (identical in single-head mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LhtrModel {
    format_version: u32,
    pub encoder: Mlp,
    pub c_ext: Mlp,
    pub c_bulk: Mlp,
    pub discriminator: Mlp,
    pub threshold: TailThreshold,
    pub config: LhtrConfig,
}

impl LhtrModel {
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.encoder.forward(x)
    }

    pub fn latent_norm(&self, x: &[f64]) -> f64 {
        infinity_norm(&self.encode(x))
    }

    /// Routes through the extreme head when the code norm reaches the
    /// threshold (boundary inclusive), otherwise through the bulk head.
    pub fn predict_combined(&self, x: &[f64]) -> i8 {
        let z = self.encode(x);
        let head = if infinity_norm(&z) >= self.threshold.t { &self.c_ext } else { &self.c_bulk };
        probability_to_label(head.forward(&z)[0])
    }

    /// Extreme codes keep the extreme head; bulk points are delegated to an
    /// external classifier evaluated on the original input.
    pub fn predict_hybrid<F>(&self, bulk: F, x: &[f64]) -> i8
    where
        F: Fn(&[f64]) -> i8,
    {
        let z = self.encode(x);
        if infinity_norm(&z) >= self.threshold.t {
            probability_to_label(self.c_ext.forward(&z)[0])
        } else {
            bulk(x)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: LhtrModel = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let d = self.encoder.output_dim();
        if self.c_ext.input_dim() != d || self.c_bulk.input_dim() != d || self.discriminator.input_dim() != d {
            return Err(Error::dim("head input dimensions do not match the code dimension"));
        }
        if !(self.threshold.t.is_finite() && self.threshold.t >= 0.0) {
            return Err(Error::invalid("threshold must be finite and nonnegative"));
        }
        Ok(())
    }
}
