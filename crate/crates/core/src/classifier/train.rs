//! Semi-supervised training loop and its supervised-only counterpart.

use std::collections::BTreeMap;

use candle_core::{DType, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentationPolicy};
use super::checkpoint::Checkpoint;
use super::model::{argmax, ModalityModel, ModelConfig};
use super::ssl::{compute_class_weights, ssl_objective, weight_array};
use crate::data_io::ImageSample;
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SslConfig {
    /// Confidence threshold for pseudo-labels (strict `p > tau`).
    pub tau: f64,
    /// Weight of the unlabeled term.
    pub lambda_u: f64,
    /// Per-class supervised weights; inverse-frequency when unset.
    pub class_weights: Option<BTreeMap<Modality, f64>>,
    pub batch_size_labeled: usize,
    pub batch_size_unlabeled: usize,
    pub epochs: usize,
    /// Optimizer steps per epoch; derived from dataset sizes when unset.
    pub steps_per_epoch: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Fraction of labeled data held out (stratified) for checkpoint selection.
    pub val_fraction: f64,
    pub weak: AugmentationPolicy,
    pub strong: AugmentationPolicy,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            tau: 0.95,
            lambda_u: 1.0,
            class_weights: None,
            batch_size_labeled: 16,
            batch_size_unlabeled: 32,
            epochs: 30,
            steps_per_epoch: None,
            learning_rate: 0.03,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            val_fraction: 0.1,
            weak: AugmentationPolicy::weak(),
            strong: AugmentationPolicy::strong(),
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0,1), got {}", self.tau)));
        }
        if !(self.lambda_u >= 0.0) {
            return Err(Error::Config(format!("lambda_u must be non-negative, got {}", self.lambda_u)));
        }
        if let Some(w) = &self.class_weights {
            if let Some((m, v)) = w.iter().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::Config(format!("class weight for {m} must be positive, got {v}")));
            }
        }
        if self.batch_size_labeled == 0 || self.batch_size_unlabeled == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record; one JSON line in the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub sup_loss: f64,
    pub unsup_loss: f64,
    pub mask_rate: f64,
    pub val_acc: f64,
}

pub struct TrainOutcome {
    /// Checkpoint with the best held-out accuracy (latest epoch on ties).
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

/// SGD with momentum and L2 weight decay.
pub struct Sgd {
    params: Vec<Var>,
    velocity: Vec<Option<Tensor>>,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    pub fn new(params: Vec<Var>, momentum: f64, weight_decay: f64) -> Self {
        let velocity = vec![None; params.len()];
        Self {
            params,
            velocity,
            momentum,
            weight_decay,
        }
    }

    pub fn step(&mut self, loss: &Tensor, lr: f64) -> Result<()> {
        let grads = loss.backward()?;
        for (param, velocity) in self.params.iter().zip(self.velocity.iter_mut()) {
            let Some(grad) = grads.get(param.as_tensor()) else { continue };
            let w = param.as_tensor().detach();
            let grad = (grad.detach() + (&w * self.weight_decay)?)?;
            let v = match velocity.take() {
                Some(v) => ((v * self.momentum)? + grad)?,
                None => grad,
            };
            param.set(&(w - (&v * lr)?)?)?;
            *velocity = Some(v);
        }
        Ok(())
    }
}

/// Cosine decay `lr·cos(7πk / 16K)`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * (7.0 * std::f64::consts::PI * step as f64 / (16.0 * total as f64)).cos()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SPLIT_STREAM: u64 = 1;
const LABELED_STREAM: u64 = 2;
const UNLABELED_STREAM: u64 = 3;

/// Stratified split of `labels` into (train, validation) indices.
pub fn stratified_split(labels: &[Modality], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream_rng(seed, SPLIT_STREAM);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for m in Modality::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == m).collect();
        idx.shuffle(&mut rng);
        let mut n_val = (idx.len() as f64 * val_fraction).round() as usize;
        if val_fraction > 0.0 && idx.len() >= 2 {
            n_val = n_val.clamp(1, idx.len() - 1);
        }
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Endless reshuffled stream of batch indices.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(items: Vec<usize>, batch: usize, rng: ChaCha8Rng) -> Self {
        let mut s = Self {
            cursor: items.len(),
            order: items,
            batch,
            rng,
        };
        s.cursor = s.order.len();
        s
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch.min(self.order.len()) {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

struct Prepared {
    model: ModalityModel,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    labels: Vec<Modality>,
    weights: [f64; 3],
}

fn prepare(model_config: &ModelConfig, labeled: &[ImageSample], config: &SslConfig) -> Result<Prepared> {
    config.validate()?;
    if labeled.is_empty() {
        return Err(Error::Data("labeled set is empty".into()));
    }
    let labels = labeled
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.modality_label
                .ok_or_else(|| Error::Data(format!("labeled sample {i} (`{}`) has no modality label", s.record_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    // fails with DataError when a class is absent
    let all_weights = compute_class_weights(&labels)?;
    let (train_idx, val_idx) = stratified_split(&labels, config.val_fraction, config.seed);
    let weights = match &config.class_weights {
        Some(w) => weight_array(Some(w))?,
        None => {
            let train_labels: Vec<Modality> = train_idx.iter().map(|&i| labels[i]).collect();
            weight_array(Some(&compute_class_weights(&train_labels).unwrap_or(all_weights)))?
        }
    };
    let model = ModalityModel::new(model_config.clone(), DType::F32, config.seed)?;
    Ok(Prepared {
        model,
        train_idx,
        val_idx,
        labels,
        weights,
    })
}

/// Fraction of `samples` whose argmax prediction matches their label.
pub fn accuracy(model: &ModalityModel, samples: &[&ImageSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in samples.chunks(64) {
        let logits = model.forward(&model.batch_tensor(chunk)?, Mode::Eval)?;
        let rows = logits.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        correct += rows
            .iter()
            .zip(chunk)
            .filter(|(r, s)| s.modality_label.map(|m| m.index()) == Some(argmax(r).0))
            .count();
    }
    Ok(correct as f64 / samples.len() as f64)
}

fn augmented_batch<R: rand::Rng>(
    model: &ModalityModel,
    images: &[ImageSample],
    idx: &[usize],
    policy: &AugmentationPolicy,
    modalities: Option<&[Option<Modality>]>,
    rng: &mut R,
) -> Result<Tensor> {
    let augmented: Vec<ImageSample> = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| augment(&images[i], policy, modalities.and_then(|m| m[k]), rng))
        .collect();
    model.batch_tensor(&augmented.iter().collect::<Vec<_>>())
}

struct EpochAccumulator {
    sup: f64,
    unsup: f64,
    mask: f64,
    steps: usize,
}

struct Selection {
    best: Option<(f64, Checkpoint)>,
    history: Vec<EpochLog>,
}

impl Selection {
    fn record(&mut self, prep: &Prepared, labeled: &[ImageSample], config: &SslConfig, epoch: usize, acc: EpochAccumulator) -> Result<()> {
        let val: Vec<&ImageSample> = prep.val_idx.iter().map(|&i| &labeled[i]).collect();
        let val_acc = accuracy(&prep.model, &val)?;
        let steps = acc.steps.max(1) as f64;
        let entry = EpochLog {
            epoch,
            sup_loss: acc.sup / steps,
            unsup_loss: acc.unsup / steps,
            mask_rate: acc.mask / steps,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: sup {:.4} unsup {:.4} mask {:.3} val_acc {:.3}",
            entry.sup_loss,
            entry.unsup_loss,
            entry.mask_rate,
            entry.val_acc
        );
        if self.best.as_ref().is_none_or(|(b, _)| val_acc >= *b) {
            let metrics = [
                ("val_acc".to_string(), val_acc),
                ("sup_loss".to_string(), entry.sup_loss),
                ("unsup_loss".to_string(), entry.unsup_loss),
                ("mask_rate".to_string(), entry.mask_rate),
            ]
            .into_iter()
            .collect();
            self.best = Some((val_acc, Checkpoint::from_model(&prep.model, Some(config.clone()), epoch, metrics)));
        }
        self.history.push(entry);
        Ok(())
    }

    fn finish(self, prep: &Prepared, config: &SslConfig) -> TrainOutcome {
        let checkpoint = match self.best {
            Some((_, c)) => c,
            None => Checkpoint::from_model(&prep.model, Some(config.clone()), 0, BTreeMap::new()),
        };
        TrainOutcome {
            checkpoint,
            history: self.history,
        }
    }
}

/// Semi-supervised training on `labeled` (every sample carries a label)
/// and `unlabeled` images.
///
/// Each step draws a weakly augmented labeled batch and, when `lambda_u > 0`,
/// an unlabeled batch whose weak view yields pseudo-labels and whose strong
/// view (augmented per pseudo-modality) is trained on them. With
/// `lambda_u == 0` the unlabeled branch is skipped entirely.
pub fn train(
    model_config: &ModelConfig,
    labeled: &[ImageSample],
    unlabeled: &[ImageSample],
    config: &SslConfig,
) -> Result<TrainOutcome> {
    let prep = prepare(model_config, labeled, config)?;
    let use_unlabeled = config.lambda_u > 0.0 && !unlabeled.is_empty();
    let steps_per_epoch = config.steps_per_epoch.unwrap_or_else(|| {
        if use_unlabeled {
            unlabeled.len().div_ceil(config.batch_size_unlabeled)
        } else {
            prep.train_idx.len().div_ceil(config.batch_size_labeled)
        }
    });
    let total_steps = config.epochs * steps_per_epoch;

    let mut labeled_stream = BatchStream::new(prep.train_idx.clone(), config.batch_size_labeled, stream_rng(config.seed, LABELED_STREAM));
    let mut unlabeled_stream = BatchStream::new(
        (0..unlabeled.len()).collect(),
        config.batch_size_unlabeled,
        stream_rng(config.seed, UNLABELED_STREAM),
    );
    let mut optimizer = Sgd::new(
        prep.model.store().params().map(|(_, v)| v.clone()).collect(),
        config.momentum,
        config.weight_decay,
    );
    let mut selection = Selection { best: None, history: Vec::new() };

    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut acc = EpochAccumulator { sup: 0.0, unsup: 0.0, mask: 0.0, steps: 0 };
        for _ in 0..steps_per_epoch {
            let l_idx = labeled_stream.next_batch();
            let labels: Vec<usize> = l_idx.iter().map(|&i| prep.labels[i].index()).collect();
            let x_l = augmented_batch(&prep.model, labeled, &l_idx, &config.weak, None, &mut labeled_stream.rng)?;

            let objective = if use_unlabeled {
                let u_idx = unlabeled_stream.next_batch();
                let rng = &mut unlabeled_stream.rng;
                let x_weak = augmented_batch(&prep.model, unlabeled, &u_idx, &config.weak, None, rng)?;
                let weak_logits = prep.model.forward(&x_weak, Mode::Train)?.detach();
                let pseudo: Vec<Option<Modality>> = weak_logits
                    .to_dtype(DType::F64)?
                    .to_vec2::<f64>()?
                    .iter()
                    .map(|r| Modality::from_index(argmax(r).0))
                    .collect();
                let x_strong = augmented_batch(&prep.model, unlabeled, &u_idx, &config.strong, Some(&pseudo), rng)?;
                let n_l = l_idx.len();
                let logits = prep.model.forward(&Tensor::cat(&[&x_l, &x_strong], 0)?, Mode::Train)?;
                let strong_logits = logits.narrow(0, n_l, u_idx.len())?;
                let labeled_logits = logits.narrow(0, 0, n_l)?;
                ssl_objective(
                    Some(&labeled_logits),
                    &labels,
                    Some(&weak_logits),
                    Some(&strong_logits),
                    &prep.weights,
                    config.tau,
                    config.lambda_u,
                )?
            } else {
                let logits = prep.model.forward(&x_l, Mode::Train)?;
                ssl_objective(Some(&logits), &labels, None, None, &prep.weights, config.tau, config.lambda_u)?
            };

            optimizer.step(&objective.total, cosine_lr(config.learning_rate, step, total_steps))?;
            step += 1;
            acc.sup += objective.supervised;
            acc.unsup += objective.unsupervised;
            acc.mask += objective.mask_rate;
            acc.steps += 1;
        }
        selection.record(&prep, labeled, config, epoch, acc)?;
    }
    Ok(selection.finish(&prep, config))
}

/// Plain supervised loop over the labeled stream only: the baseline the
/// semi-supervised objective is compared against.
pub fn train_supervised(model_config: &ModelConfig, labeled: &[ImageSample], config: &SslConfig) -> Result<TrainOutcome> {
    let prep = prepare(model_config, labeled, config)?;
    let steps_per_epoch = config
        .steps_per_epoch
        .unwrap_or_else(|| prep.train_idx.len().div_ceil(config.batch_size_labeled));
    let total_steps = config.epochs * steps_per_epoch;
    let mut stream = BatchStream::new(prep.train_idx.clone(), config.batch_size_labeled, stream_rng(config.seed, LABELED_STREAM));
    let mut optimizer = Sgd::new(
        prep.model.store().params().map(|(_, v)| v.clone()).collect(),
        config.momentum,
        config.weight_decay,
    );
    let mut selection = Selection { best: None, history: Vec::new() };
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut acc = EpochAccumulator { sup: 0.0, unsup: 0.0, mask: 0.0, steps: 0 };
        for _ in 0..steps_per_epoch {
            let idx = stream.next_batch();
            let labels: Vec<usize> = idx.iter().map(|&i| prep.labels[i].index()).collect();
            let x = augmented_batch(&prep.model, labeled, &idx, &config.weak, None, &mut stream.rng)?;
            let logits = prep.model.forward(&x, Mode::Train)?;
            let objective = ssl_objective(Some(&logits), &labels, None, None, &prep.weights, config.tau, 0.0)?;
            optimizer.step(&objective.total, cosine_lr(config.learning_rate, step, total_steps))?;
            step += 1;
            acc.sup += objective.supervised;
            acc.steps += 1;
        }
        selection.record(&prep, labeled, config, epoch, acc)?;
    }
    Ok(selection.finish(&prep, config))
}
