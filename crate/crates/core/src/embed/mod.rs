//! Verification embedding: a linear map trained with the triplet hinge loss.

mod mining;
mod sampling;

pub use mining::{mine_hard_examples, HardExamples, LabeledSequence, MiningConfig};
pub use sampling::{sample_triplets, LabeledTrack, TrackDataset, TripletSampler};

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blob::{Blob, EMBEDDING_MAGIC};
use crate::error::{Error, Result};
use crate::media::FeatureVector;
use crate::rng;

/// Linear embedding `f(x) = W x` with `W` of shape `dim_out × dim_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    dim_in: usize,
    dim_out: usize,
    weights: Vec<f64>,
}

impl EmbeddingModel {
    pub fn from_weights(dim_out: usize, dim_in: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != dim_in * dim_out {
            return Err(Error::Data(format!(
                "embedding expects {} weights, got {}",
                dim_in * dim_out,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Data("embedding weights must be finite".into()));
        }
        Ok(EmbeddingModel {
            dim_in,
            dim_out,
            weights,
        })
    }

    /// Gaussian initialization with variance `1 / dim_in`.
    pub fn random(dim_out: usize, dim_in: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "embedding-init");
        let scale = 1.0 / (dim_in as f64).sqrt();
        let weights = (0..dim_in * dim_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                z * scale
            })
            .collect();
        EmbeddingModel {
            dim_in,
            dim_out,
            weights,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim_in, "feature dimension mismatch");
        self.weights
            .chunks_exact(self.dim_in)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        Blob {
            rows: self.dim_out,
            cols: self.dim_in,
            meta: vec![],
            values: self.weights.clone(),
        }
        .encode(EMBEDDING_MAGIC)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let b = Blob::decode(bytes, EMBEDDING_MAGIC)?;
        EmbeddingModel::from_weights(b.rows, b.cols, b.values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        EmbeddingModel::from_bytes(&bytes)
    }
}

/// Anchor, positive and negative descriptors of one training triplet.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletExample {
    pub anchor: FeatureVector,
    pub positive: FeatureVector,
    pub negative: FeatureVector,
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Pre-hinge value `‖f(a) − f(p)‖² − ‖f(a) − f(n)‖² + α`.
pub fn triplet_margin(model: &EmbeddingModel, t: &TripletExample, alpha: f64) -> f64 {
    let dp = model.embed(&diff(&t.anchor.values, &t.positive.values));
    let dn = model.embed(&diff(&t.anchor.values, &t.negative.values));
    sq_norm(&dp) - sq_norm(&dn) + alpha
}

/// Triplet hinge loss of a single example.
pub fn triplet_loss(model: &EmbeddingModel, t: &TripletExample, alpha: f64) -> f64 {
    triplet_margin(model, t, alpha).max(0.0)
}

/// Adds `scale · ∂loss/∂W` to `grad` and returns the loss. The gradient is
/// zero when the hinge is inactive, including exactly at the kink.
fn accumulate_gradient(model: &EmbeddingModel, t: &TripletExample, alpha: f64, scale: f64, grad: &mut [f64]) -> f64 {
    let dp = diff(&t.anchor.values, &t.positive.values);
    let dn = diff(&t.anchor.values, &t.negative.values);
    let wdp = model.embed(&dp);
    let wdn = model.embed(&dn);
    let loss = sq_norm(&wdp) - sq_norm(&wdn) + alpha;
    if loss <= 0.0 {
        return 0.0;
    }
    let n = model.dim_in;
    for (i, row) in grad.chunks_exact_mut(n).enumerate() {
        let (a, b) = (2.0 * scale * wdp[i], 2.0 * scale * wdn[i]);
        for ((g, p), q) in row.iter_mut().zip(&dp).zip(&dn) {
            *g += a * p - b * q;
        }
    }
    loss
}

/// Analytic gradient of [`triplet_loss`] with respect to the weights.
pub fn triplet_gradient(model: &EmbeddingModel, t: &TripletExample, alpha: f64) -> Vec<f64> {
    let mut g = vec![0.0; model.weights.len()];
    accumulate_gradient(model, t, alpha, 1.0, &mut g);
    g
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradCheck {
    /// Largest relative error between analytic and central-difference
    /// derivatives over all weights.
    Checked { max_rel_error: f64 },
    /// The hinge is inactive (or too close to the kink for finite
    /// differences); the analytic gradient is identically zero there.
    HingeInactive,
}

/// Finite-difference step used by [`gradient_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares the analytic triplet gradient with central differences.
pub fn gradient_check(model: &EmbeddingModel, t: &TripletExample, alpha: f64) -> GradCheck {
    let margin = triplet_margin(model, t, alpha);
    if margin <= 1e-6 {
        return GradCheck::HingeInactive;
    }
    let analytic = triplet_gradient(model, t, alpha);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let w0 = probe.weights[i];
        probe.weights[i] = w0 + GRAD_CHECK_STEP;
        let up = triplet_loss(&probe, t, alpha);
        probe.weights[i] = w0 - GRAD_CHECK_STEP;
        let down = triplet_loss(&probe, t, alpha);
        probe.weights[i] = w0;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    GradCheck::Checked { max_rel_error: worst }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Triplet margin α.
    pub margin: f64,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub triplets_per_epoch: usize,
    pub embedding_dim: usize,
    /// Learning rate is multiplied by `lr_decay` every `lr_decay_every` epochs.
    pub lr_decay_every: usize,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 0.2,
            lr: 1e-2,
            momentum: 0.9,
            epochs: 30,
            batch: 64,
            triplets_per_epoch: 2000,
            embedding_dim: 64,
            lr_decay_every: 20,
            lr_decay: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        if self.batch == 0 || self.triplets_per_epoch == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("batch, triplets per epoch and embedding dim must be positive".into()));
        }
        Ok(())
    }

    /// Step-decayed learning rate in effect during `epoch` (0-based).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let steps = epoch.checked_div(self.lr_decay_every).unwrap_or(0);
        self.lr * self.lr_decay.powi(steps as i32)
    }
}

/// Supplies training triplets epoch by epoch.
pub trait TripletSource {
    fn draw(&mut self, n: usize) -> Vec<TripletExample>;
}

/// Cycles through a fixed list in order.
pub struct FixedTriplets {
    items: Vec<TripletExample>,
    next: usize,
}

impl FixedTriplets {
    pub fn new(items: Vec<TripletExample>) -> Self {
        FixedTriplets { items, next: 0 }
    }
}

impl TripletSource for FixedTriplets {
    fn draw(&mut self, n: usize) -> Vec<TripletExample> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| {
                let t = self.items[self.next].clone();
                self.next = (self.next + 1) % self.items.len();
                t
            })
            .collect()
    }
}

/// Mixes two sources, drawing a fixed fraction from the first.
pub struct MixedTriplets<A, B> {
    pub first: A,
    pub second: B,
    pub first_fraction: f64,
}

impl<A: TripletSource, B: TripletSource> TripletSource for MixedTriplets<A, B> {
    fn draw(&mut self, n: usize) -> Vec<TripletExample> {
        let k = ((n as f64) * self.first_fraction).round() as usize;
        let mut out = self.first.draw(k.min(n));
        out.extend(self.second.draw(n - out.len()));
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: EmbeddingModel,
    /// Mean triplet loss over each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
    /// Learning rate used in each epoch.
    pub epoch_lrs: Vec<f64>,
}

/// Trains a fresh embedding for `dim_in`-dimensional descriptors.
pub fn train_embedding(config: &TrainConfig, dim_in: usize, source: &mut dyn TripletSource) -> Result<TrainReport> {
    let init = EmbeddingModel::random(config.embedding_dim, dim_in, rng::child_seed(config.seed, "embedding"));
    fine_tune(init, config, source)
}

/// Continues training from an existing model with mini-batch gradient
/// descent with momentum and step learning-rate decay.
pub fn fine_tune(mut model: EmbeddingModel, config: &TrainConfig, source: &mut dyn TripletSource) -> Result<TrainReport> {
    config.validate()?;
    let mut velocity = vec![0.0; model.weights.len()];
    let mut grad = vec![0.0; model.weights.len()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut epoch_lrs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.lr_at_epoch(epoch);
        let triplets = source.draw(config.triplets_per_epoch);
        if triplets.is_empty() {
            return Err(Error::Data("no training triplets".into()));
        }
        if let Some(bad) = triplets.iter().find(|t| {
            t.anchor.dim() != model.dim_in || t.positive.dim() != model.dim_in || t.negative.dim() != model.dim_in
        }) {
            return Err(Error::Data(format!(
                "triplet dimension {} does not match model input {}",
                bad.anchor.dim(),
                model.dim_in
            )));
        }
        let mut total = 0.0;
        for batch in triplets.chunks(config.batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for t in batch {
                total += accumulate_gradient(&model, t, config.margin, scale, &mut grad);
            }
            for ((w, v), g) in model.weights.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v + g;
                *w -= lr * *v;
            }
        }
        let mean = total / triplets.len() as f64;
        if !mean.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged(format!("epoch {epoch}: mean loss {mean} at lr {lr}")));
        }
        log::debug!("epoch {epoch}: loss {mean:.6} lr {lr:.2e}");
        epoch_losses.push(mean);
        epoch_lrs.push(lr);
    }
    Ok(TrainReport {
        model,
        epoch_losses,
        epoch_lrs,
    })
}

/// Fraction of triplets whose negative is at least `alpha` farther from the
/// anchor than the positive.
pub fn margin_satisfied_fraction(model: &EmbeddingModel, triplets: &[TripletExample], alpha: f64) -> f64 {
    if triplets.is_empty() {
        return 1.0;
    }
    let ok = triplets
        .iter()
        .filter(|t| triplet_margin(model, t, alpha) <= 0.0)
        .count();
    ok as f64 / triplets.len() as f64
}

/// Random feature vector helper used by examples and tests.
pub fn random_feature(dim: usize, rng: &mut impl Rng) -> FeatureVector {
    FeatureVector {
        values: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

#[cfg(test)]
mod tests;
