//! Head training with a frozen encoder.
//!
//! Embeddings are computed once per patient and cached, so an epoch only
//! touches the clinical encoder and the MLP head.

mod adamw;
mod backprop;
mod checkpoint;
mod gradcheck;
mod loss;
mod sampler;
mod schedule;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState};
pub use backprop::{batch_loss, head_gradients, train_forward, Batch, HeadGradients};
pub use gradcheck::{finite_difference_check, global_relative_error, TensorCheck};
pub use checkpoint::{Checkpoint, CheckpointManifest, CHECKPOINT_JSON, CHECKPOINT_TARC};
pub use loss::{class_weights, wbce_loss, wbce_mean, PROB_CLAMP};
pub use sampler::{sampling_probabilities, WeightedSampler};
pub use schedule::{default_warmup, lr_at};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio::{self, Provenance};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::fusion::{forward_batch, update_running_stats, HeadConfig, HeadParams, Mode};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Fraction of all optimizer steps spent warming up.
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub epsilon: f64,
    pub dropout: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            batch_size: 42,
            peak_lr: 1e-6,
            warmup_fraction: 0.1,
            weight_decay: 1e-7,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
            dropout: 0.25,
            patience: 20,
            min_delta: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch-norm");
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || self.epsilon <= 0.0 || self.min_delta < 0.0 {
            return bad("weight_decay, epsilon and min_delta must be non-negative");
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return bad("betas must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// Embeddings, standardized clinical features and labels of one split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub embeddings: Vec<Vec<f32>>,
    pub clinical: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, id: impl Into<String>, embedding: Vec<f32>, clinical: Vec<f64>, label: u8) {
        self.ids.push(id.into());
        self.embeddings.push(embedding);
        self.clinical.push(clinical);
        self.labels.push(label);
    }

    fn clinical_f32(&self) -> Vec<Vec<f32>> {
        self.clinical.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect()
    }
}

/// Eval-mode probabilities for every element of `data`.
pub fn predict(params: &HeadParams<f32>, data: &Dataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&[f32]> = data.embeddings.iter().map(Vec::as_slice).collect();
    let cache = forward_batch(params, &refs, &data.clinical_f32(), Mode::Eval, None)?;
    Ok(cache.probs.iter().map(|&p| p as f64).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStopping => "early_stopping",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub lr: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// `None` when the validation split has a single class.
    pub val_auc: Vec<Option<f64>>,
    /// Zero-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub const CSV_HEADER: [&'static str; 5] = ["epoch", "lr", "train_loss", "val_loss", "val_auc"];

    pub fn rows(&self) -> Vec<Vec<String>> {
        (0..self.epochs())
            .map(|e| {
                vec![
                    e.to_string(),
                    csvio::num(self.lr[e]),
                    csvio::num(self.train_loss[e]),
                    csvio::num(self.val_loss[e]),
                    csvio::opt(self.val_auc[e]),
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        let prov = provenance
            .clone()
            .with("best_epoch", self.best_epoch)
            .with("stop_reason", self.stop_reason);
        csvio::write(path, &prov, &Self::CSV_HEADER, &self.rows())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: HeadParams<f32>,
    pub history: TrainHistory,
    pub class_weights: (f64, f64),
}

/// Fits the head on `train`, early-stopping on validation WBCE, and returns
/// the parameters of the best validation epoch.
pub fn train(head: &HeadConfig, cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }
    let head = HeadConfig {
        dropout: cfg.dropout,
        ..head.clone()
    };
    let (w_pos, w_neg) = class_weights(&train.labels)?;
    let weights = (w_pos as f32, w_neg as f32);
    let mut params: HeadParams<f32> = HeadParams::init(head, &mut rng::named_substream(cfg.seed, "head-init", 0))?;
    let mut sampler = WeightedSampler::new(&train.labels, cfg.batch_size, cfg.seed)?;
    let steps_per_epoch = {
        // a trailing singleton batch is dropped
        let full = train.len() / cfg.batch_size;
        let rem = train.len() % cfg.batch_size;
        full + usize::from(rem >= 2)
    };
    if steps_per_epoch == 0 {
        return Err(Error::Config("training split needs at least 2 patients".into()));
    }
    let total_steps = steps_per_epoch * cfg.max_epochs;
    let warmup = ((total_steps as f64 * cfg.warmup_fraction).round() as usize).min(total_steps - 1);
    let opt_cfg = cfg.adamw();
    let shapes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
    let mut state = OptimizerState::<f32>::new(&shapes);

    let train_clin = train.clinical_f32();
    let mut history = TrainHistory {
        lr: Vec::new(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_auc: Vec::new(),
        best_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best: Option<(f64, HeadParams<f32>)> = None;
    let mut stale = 0usize;
    let mut step = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut losses = Vec::with_capacity(steps_per_epoch);
        let mut last_lr = 0.0;
        for idx in sampler.epoch().into_iter().filter(|b| b.len() >= 2) {
            let embeddings: Vec<&[f32]> = idx.iter().map(|&i| train.embeddings[i].as_slice()).collect();
            let clinical: Vec<Vec<f32>> = idx.iter().map(|&i| train_clin[i].clone()).collect();
            let labels: Vec<u8> = idx.iter().map(|&i| train.labels[i]).collect();
            let batch = Batch {
                embeddings: &embeddings,
                clinical: &clinical,
                labels: &labels,
            };
            step += 1;
            let dropout_seed = rng::splitmix64(cfg.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (grads, cache) = head_gradients(&params, &batch, weights, dropout_seed)?;
            if !grads.loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, step {step}")));
            }
            losses.push(grads.loss as f64);
            update_running_stats(&mut params, &cache);
            let lr = lr_at(step, total_steps, warmup, cfg.peak_lr);
            last_lr = lr;
            adamw_step(&mut params.trainable_mut(), &grads.tensors, &mut state, lr, &opt_cfg)?;
        }
        params
            .check_finite()
            .map_err(|e| Error::NonFinite(format!("parameters after epoch {epoch}: {e}")))?;

        let val_probs = predict(&params, val)?;
        let val_p32: Vec<f32> = val_probs.iter().map(|&p| p as f32).collect();
        let val_loss = wbce_mean(&val_p32, &val.labels, weights.0, weights.1) as f64;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        history.lr.push(last_lr);
        history.train_loss.push(losses.iter().sum::<f64>() / losses.len().max(1) as f64);
        history.val_loss.push(val_loss);
        history.val_auc.push(evaluation::auc(&val_probs, &val.labels).ok());

        let improved = best.as_ref().is_none_or(|(b, _)| val_loss < b - cfg.min_delta);
        if improved {
            best = Some((val_loss, params.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                history.stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        history,
        class_weights: (w_pos, w_neg),
    })
}
