//! Mini-batch training with Adam, focal loss and early stopping on validation loss.

mod adam;
mod data;

pub use adam::{adam_step, clip_global_norm, AdamHyper, AdamState};
pub use data::{load_samples, Sample};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::SegmentRecord;
use crate::error::{Error, Result};
use crate::evaluator::classification_f1;
use crate::model::{forward, loss_and_grads, loss_only, Mode, ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clip; off when absent.
    pub clip_norm: Option<f64>,
    /// Replace the model's class weights with inverse class frequencies of the training split.
    pub auto_class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            auto_class_weights: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("batch_size, max_epochs and early_stop_patience must be at least 1"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::config("adam betas must lie in [0, 1) and eps must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config(format!("clip_norm {c} must be positive")));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Inverse class frequency weights `N / (2 N_c)`, so a balanced set gives `[1, 1]`.
pub fn compute_class_weights(labels: impl IntoIterator<Item = u8>) -> Result<[f64; 2]> {
    let mut counts = [0usize; 2];
    for l in labels {
        counts[usize::from(l != 0)] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::contract(format!(
            "class weights need both classes (negatives {}, positives {}); set class_weights and disable auto_class_weights",
            counts[0], counts[1]
        )));
    }
    let n = (counts[0] + counts[1]) as f64;
    Ok([n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)])
}

pub fn class_weights_for(records: &[SegmentRecord]) -> Result<[f64; 2]> {
    compute_class_weights(records.iter().map(|r| r.label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

/// Tracks the best validation loss; strict improvement resets the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records the loss of `epoch`. Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        let improved = self.best.is_none_or(|(_, b)| loss < b);
        if improved {
            self.best = Some((epoch, loss));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        (improved, self.stale >= self.patience)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub class_weights: [f64; 2],
    pub guard_events: usize,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// Per-epoch losses and F1, the part of the report that is reproducible under a seed.
    pub fn trajectory(&self) -> Vec<(f64, f64, f64)> {
        self.epochs.iter().map(|e| (e.train_loss, e.val_loss, e.val_f1)).collect()
    }
}

pub struct TrainOutcome {
    /// Parameters from the best epoch.
    pub params: ModelParams<f32>,
    /// The model configuration actually trained, including class weights.
    pub config: ModelConfig,
    pub report: TrainReport,
}

/// Dropout RNG of one sample in one epoch, independent of batching and threads.
fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6472_6f70_6f75_7400);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Mean validation loss and F1, dropout off.
pub fn validate(params: &ModelParams<f32>, cfg: &ModelConfig, samples: &[Sample]) -> Result<(f64, f64)> {
    let outs: Vec<(f32, u8)> = samples
        .par_iter()
        .map(|s| loss_only(params, cfg, &s.inputs, s.label).map(|(l, o)| (l, o.label)))
        .collect::<Result<_>>()?;
    let loss = outs.iter().map(|&(l, _)| f64::from(l)).sum::<f64>() / samples.len().max(1) as f64;
    let preds: Vec<u8> = outs.iter().map(|&(_, p)| p).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    Ok((loss, classification_f1(&preds, &labels)?.f1))
}

/// Predicted labels for `samples`, dropout off.
pub fn predict(params: &ModelParams<f32>, cfg: &ModelConfig, samples: &[Sample]) -> Result<Vec<u8>> {
    samples
        .par_iter()
        .map(|s| forward(params, cfg, &s.inputs, Mode::Eval).map(|o| o.label))
        .collect()
}

/// Trains from a seeded initialization and returns the best-epoch parameters.
///
/// `on_epoch` sees every epoch as it completes.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::contract("training needs non-empty train and val splits"));
    }
    let mut model_cfg = model_cfg.clone();
    if cfg.auto_class_weights {
        model_cfg.class_weights = compute_class_weights(train_set.iter().map(|s| s.label))?;
    }
    let model_cfg = model_cfg;
    let start = Instant::now();

    let mut params = ModelParams::<f32>::init(&model_cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut state = AdamState::new(&params);
    let hp = cfg.adam();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7368_7566_666c_6500);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best_params = params.clone();
    let mut epochs = Vec::new();
    let mut guard_events = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_set[i];
                    let mut rng = sample_rng(cfg.seed, epoch, i);
                    loss_and_grads(&params, &model_cfg, &s.inputs, s.label, Mode::Train(&mut rng))
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f32;
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0f32;
            for r in &results {
                batch_loss += r.loss;
                guard_events += r.guard_events;
                for (acc, g) in grads.leaves_mut().into_iter().zip(r.grads.leaves()) {
                    acc.axpy(scale, g)?;
                }
            }
            let batch_loss = batch_loss * scale;
            if !batch_loss.is_finite() {
                let norms: Vec<String> = params.norms().iter().map(|(n, v)| format!("{n}={v:.3e}")).collect();
                return Err(Error::NonFinite(format!(
                    "loss {batch_loss} at epoch {epoch} batch {b}; parameter norms: {}",
                    norms.join(", ")
                )));
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam_step(&mut params, &grads, &mut state, &hp)?;
            loss_sum += f64::from(batch_loss) * batch.len() as f64;
        }

        let (val_loss, val_f1) = validate(&params, &model_cfg, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_f1,
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        epochs.push(log);
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_params = params.clone();
        }
        if stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        report: TrainReport {
            epochs,
            best_epoch,
            best_val_loss,
            stop_reason,
            class_weights: model_cfg.class_weights,
            guard_events,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        config: model_cfg,
    })
}

#[cfg(test)]
mod tests;
