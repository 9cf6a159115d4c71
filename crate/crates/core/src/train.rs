//! Label-smoothed targets and a linear multi-head decoder trained with plain
//! minibatch gradient descent.
//!
//! Smoothing replaces the one-hot target of step `z` with the average of
//! that one-hot and the mean one-hot over all `Z` steps, so a class that
//! appears anywhere in the future sequence keeps some target mass at every
//! step. The loss is the cross-entropy summed over every head of both axes,
//! averaged over the examples of a batch.

use serde::{Deserialize, Serialize};

use crate::ensemble::{softmax_into, LogitsTensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SplitMix64;
use crate::vocab::{Action, Axis};

/// Floor applied to predicted probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Smooths a `Z x C` matrix of one-hot rows.
pub fn smooth_labels(onehots: &Matrix) -> Result<Matrix> {
    let mut ids = Vec::with_capacity(onehots.rows());
    for (r, row) in onehots.iter_rows().enumerate() {
        let ones = row.iter().filter(|&&x| x == 1.0).count();
        let zeros = row.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::NotOneHot { row: r });
        }
        ids.push(row.iter().position(|&x| x == 1.0).expect("one entry is 1"));
    }
    Ok(smooth_label_ids(&ids, onehots.cols()))
}

/// Smoothed targets straight from class ids.
pub fn smooth_label_ids(ids: &[usize], classes: usize) -> Matrix {
    let z = ids.len();
    let mut mean = vec![0.0; classes];
    for &c in ids {
        mean[c] += 1.0;
    }
    for m in &mut mean {
        *m /= z as f64;
    }
    let mut out = Matrix::zeros(z, classes);
    for (r, &c) in ids.iter().enumerate() {
        let row = out.row_mut(r);
        for (k, x) in row.iter_mut().enumerate() {
            let y = if k == c { 1.0 } else { 0.0 };
            *x = (y + mean[k]) / 2.0;
        }
    }
    out
}

pub fn one_hot_ids(ids: &[usize], classes: usize) -> Matrix {
    let mut out = Matrix::zeros(ids.len(), classes);
    for (r, &c) in ids.iter().enumerate() {
        out.set(r, c, 1.0);
    }
    out
}

/// Per-axis training targets for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTargets {
    pub verb: Matrix,
    pub noun: Matrix,
}

impl SmoothedTargets {
    pub fn for_actions(actions: &[Action], c_verb: usize, c_noun: usize, smooth: bool) -> Self {
        let verbs: Vec<usize> = actions.iter().map(|a| a.verb).collect();
        let nouns: Vec<usize> = actions.iter().map(|a| a.noun).collect();
        let build = if smooth { smooth_label_ids } else { one_hot_ids };
        Self {
            verb: build(&verbs, c_verb),
            noun: build(&nouns, c_noun),
        }
    }

    pub fn axis(&self, axis: Axis) -> &Matrix {
        match axis {
            Axis::Verb => &self.verb,
            Axis::Noun => &self.noun,
        }
    }
}

/// `-sum_c target[c] * ln(max(pred[c], 1e-12))`.
pub fn cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch(pred.len(), target.len()));
    }
    Ok(-pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * p.max(PROB_FLOOR).ln() })
        .sum::<f64>())
}

/// One linear head: `logits = W^T x + b` with `W` stored `feature_dim x C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Head {
    fn zeros(feature_dim: usize, classes: usize) -> Self {
        Self {
            weight: Matrix::zeros(feature_dim, classes),
            bias: vec![0.0; classes],
        }
    }

    fn forward_into(&self, features: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &x) in features.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.weight.row(i)) {
                *o += w * x;
            }
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.as_mut_slice().iter_mut().chain(self.bias.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.as_slice().iter().chain(self.bias.iter())
    }
}

/// `Z` independent linear heads per axis over a shared feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDecoder")]
pub struct MultiHeadDecoder {
    pub feature_dim: usize,
    pub z: usize,
    pub c_verb: usize,
    pub c_noun: usize,
    pub verb_heads: Vec<Head>,
    pub noun_heads: Vec<Head>,
}

#[derive(Deserialize)]
struct RawDecoder {
    feature_dim: usize,
    z: usize,
    c_verb: usize,
    c_noun: usize,
    verb_heads: Vec<Head>,
    noun_heads: Vec<Head>,
}

impl TryFrom<RawDecoder> for MultiHeadDecoder {
    type Error = Error;

    fn try_from(raw: RawDecoder) -> Result<Self> {
        let dec = MultiHeadDecoder {
            feature_dim: raw.feature_dim,
            z: raw.z,
            c_verb: raw.c_verb,
            c_noun: raw.c_noun,
            verb_heads: raw.verb_heads,
            noun_heads: raw.noun_heads,
        };
        dec.check()?;
        Ok(dec)
    }
}

impl MultiHeadDecoder {
    pub fn zeros(feature_dim: usize, z: usize, c_verb: usize, c_noun: usize) -> Self {
        Self {
            feature_dim,
            z,
            c_verb,
            c_noun,
            verb_heads: (0..z).map(|_| Head::zeros(feature_dim, c_verb)).collect(),
            noun_heads: (0..z).map(|_| Head::zeros(feature_dim, c_noun)).collect(),
        }
    }

    /// Weights drawn from `N(0, scale^2)`, zero biases.
    pub fn random(feature_dim: usize, z: usize, c_verb: usize, c_noun: usize, scale: f64, seed: u64) -> Self {
        let mut dec = Self::zeros(feature_dim, z, c_verb, c_noun);
        let mut rng = SplitMix64::new(seed);
        for head in dec.verb_heads.iter_mut().chain(dec.noun_heads.iter_mut()) {
            for w in head.weight.as_mut_slice() {
                *w = scale * rng.gaussian();
            }
        }
        dec
    }

    fn check(&self) -> Result<()> {
        if self.feature_dim == 0 || self.z == 0 || self.c_verb == 0 || self.c_noun == 0 {
            return Err(Error::InvalidConfig("decoder dimensions must be positive".into()));
        }
        if self.verb_heads.len() != self.z || self.noun_heads.len() != self.z {
            return Err(Error::ShapeMismatch {
                left: format!("{} verb / {} noun heads", self.verb_heads.len(), self.noun_heads.len()),
                right: format!("z = {}", self.z),
            });
        }
        for (heads, classes) in [(&self.verb_heads, self.c_verb), (&self.noun_heads, self.c_noun)] {
            for h in heads {
                if h.weight.shape() != (self.feature_dim, classes) || h.bias.len() != classes {
                    return Err(Error::ShapeMismatch {
                        left: format!("head {}x{} + {}", h.weight.rows(), h.weight.cols(), h.bias.len()),
                        right: format!("{}x{classes}", self.feature_dim),
                    });
                }
            }
        }
        if self.params().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite decoder parameter".into()));
        }
        Ok(())
    }

    pub fn heads(&self, axis: Axis) -> &[Head] {
        match axis {
            Axis::Verb => &self.verb_heads,
            Axis::Noun => &self.noun_heads,
        }
    }

    pub fn forward(&self, features: &[f64]) -> Result<LogitsTensor> {
        self.forward_as("", features)
    }

    pub fn forward_as(&self, example_id: &str, features: &[f64]) -> Result<LogitsTensor> {
        if features.len() != self.feature_dim {
            return Err(Error::LengthMismatch(features.len(), self.feature_dim));
        }
        let run = |heads: &[Head], classes: usize| {
            let mut m = Matrix::zeros(self.z, classes);
            for (z, head) in heads.iter().enumerate() {
                head.forward_into(features, m.row_mut(z));
            }
            m
        };
        Ok(LogitsTensor {
            example_id: example_id.to_string(),
            verb_logits: run(&self.verb_heads, self.c_verb),
            noun_logits: run(&self.noun_heads, self.c_noun),
        })
    }

    pub fn param_count(&self) -> usize {
        self.z * (self.feature_dim + 1) * (self.c_verb + self.c_noun)
    }

    /// All parameters: verb heads then noun heads, each weight then bias.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.verb_heads.iter().chain(&self.noun_heads).flat_map(Head::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.verb_heads
            .iter_mut()
            .chain(self.noun_heads.iter_mut())
            .flat_map(Head::params_mut)
    }

    fn zeroed_like(&self) -> Self {
        Self::zeros(self.feature_dim, self.z, self.c_verb, self.c_noun)
    }
}

/// Free function form of [`MultiHeadDecoder::forward`].
pub fn decoder_forward(dec: &MultiHeadDecoder, features: &[f64]) -> Result<LogitsTensor> {
    dec.forward(features)
}

/// One training example: a feature vector and its `Z` future actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub use_label_smoothing: bool,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 8,
            use_label_smoothing: false,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

fn check_example(dec: &MultiHeadDecoder, ex: &TrainExample, index: usize) -> Result<()> {
    if ex.features.len() != dec.feature_dim {
        return Err(Error::InvalidConfig(format!(
            "example {index}: {} features, decoder expects {}",
            ex.features.len(),
            dec.feature_dim
        )));
    }
    if ex.actions.len() != dec.z {
        return Err(Error::InvalidConfig(format!(
            "example {index}: {} actions, decoder has {} heads",
            ex.actions.len(),
            dec.z
        )));
    }
    for a in &ex.actions {
        if a.verb >= dec.c_verb {
            return Err(Error::IndexOutOfRange {
                axis: Axis::Verb,
                index: a.verb,
                classes: dec.c_verb,
            });
        }
        if a.noun >= dec.c_noun {
            return Err(Error::IndexOutOfRange {
                axis: Axis::Noun,
                index: a.noun,
                classes: dec.c_noun,
            });
        }
    }
    Ok(())
}

/// Loss of one example: cross-entropy summed over every head of both axes.
pub fn example_loss(dec: &MultiHeadDecoder, features: &[f64], targets: &SmoothedTargets) -> Result<f64> {
    let logits = dec.forward(features)?;
    let mut loss = 0.0;
    for (m, t) in [
        (&logits.verb_logits, &targets.verb),
        (&logits.noun_logits, &targets.noun),
    ] {
        let mut p = vec![0.0; m.cols()];
        for z in 0..m.rows() {
            softmax_into(m.row(z), &mut p);
            loss += cross_entropy(&p, t.row(z))?;
        }
    }
    Ok(loss)
}

/// Mean loss over `batch` and its analytic gradient, shaped like the
/// decoder. For a softmax head the logit gradient is `softmax - target`
/// (targets sum to one).
pub fn loss_and_grad(dec: &MultiHeadDecoder, batch: &[(&[f64], &SmoothedTargets)]) -> Result<(f64, MultiHeadDecoder)> {
    let mut grad = dec.zeroed_like();
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &(features, targets) in batch {
        if features.len() != dec.feature_dim {
            return Err(Error::LengthMismatch(features.len(), dec.feature_dim));
        }
        for axis in [Axis::Verb, Axis::Noun] {
            let heads = dec.heads(axis);
            let grad_heads = match axis {
                Axis::Verb => &mut grad.verb_heads,
                Axis::Noun => &mut grad.noun_heads,
            };
            let target = targets.axis(axis);
            let classes = target.cols();
            let mut logits = vec![0.0; classes];
            let mut probs = vec![0.0; classes];
            for (z, (head, g)) in heads.iter().zip(grad_heads.iter_mut()).enumerate() {
                head.forward_into(features, &mut logits);
                softmax_into(&logits, &mut probs);
                let t = target.row(z);
                total += cross_entropy(&probs, t)?;
                for c in 0..classes {
                    let d = (probs[c] - t[c]) * scale;
                    g.bias[c] += d;
                    for (i, &x) in features.iter().enumerate() {
                        let w = g.weight.get(i, c);
                        g.weight.set(i, c, w + d * x);
                    }
                }
            }
        }
    }
    Ok((total * scale, grad))
}

/// Minibatch gradient descent. Returns the trained decoder and the mean
/// per-example loss of each epoch, measured on the forward passes that
/// produced that epoch's updates.
pub fn train(
    dec: &MultiHeadDecoder,
    dataset: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<(MultiHeadDecoder, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    for (i, ex) in dataset.iter().enumerate() {
        check_example(dec, ex, i)?;
    }
    let targets: Vec<SmoothedTargets> = dataset
        .iter()
        .map(|ex| SmoothedTargets::for_actions(&ex.actions, dec.c_verb, dec.c_noun, cfg.use_label_smoothing))
        .collect();

    let mut model = dec.clone();
    let mut rng = SplitMix64::new(cfg.rng_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], &SmoothedTargets)> = chunk
                .iter()
                .map(|&i| (dataset[i].features.as_slice(), &targets[i]))
                .collect();
            let (loss, grad) = loss_and_grad(&model, &batch)?;
            epoch_loss += loss * chunk.len() as f64;
            for (p, g) in model.params_mut().zip(grad.params()) {
                *p -= cfg.learning_rate * g;
            }
        }
        history.push(epoch_loss / dataset.len() as f64);
    }
    Ok((model, history))
}
