//! Negative pairs, the joint captioning/contrastive objective, the optimizer
//! and the epoch loop.

mod gradcheck;
mod log;
mod loss;
mod negatives;
mod optim;
mod run;

pub use gradcheck::{full_model_check, gradient_report, GradRow, GRAD_TOLERANCE};
pub use log::{read_loss_csv, LossCsv, StepLog};
pub use loss::{batch_loss, ce_loss, cl_loss, total_loss, GateMode, LossBreakdown, LossOptions};
pub use negatives::{make_negatives, sample_positives};
pub use optim::{clip_global_norm, Adam};
pub use run::{pair_probability, train, TrainReport};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::text::TokenSeq;

/// One (spectrogram, caption) pair. `y = 0` for a matched pair, `1` for a
/// mismatched one.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub mel: Arc<MelSpectrogram>,
    pub tokens: TokenSeq,
    pub y: u8,
    pub clip_id: usize,
}

/// A clip with every caption written for it.
#[derive(Clone, Debug)]
pub struct ClipData {
    pub name: String,
    pub mel: Arc<MelSpectrogram>,
    pub captions: Vec<TokenSeq>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_epochs: usize,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub negative_ratio: f64,
    /// Train the pair classifier alongside captioning.
    pub contrastive: bool,
    pub spec_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 30,
            learning_rate: 5e-4,
            warmup_epochs: 5,
            decay_every: 10,
            decay_factor: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: Some(1.0),
            seed: 0,
            negative_ratio: 1.0,
            contrastive: true,
            spec_augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.decay_every == 0 {
            return Err(Error::Config("batch size, epochs and decay period must be positive".into()));
        }
        let positive = [self.learning_rate, self.decay_factor, self.adam_eps];
        if positive.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("learning rate, decay factor and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.negative_ratio >= 0.0) {
            return Err(Error::Config("negative ratio must be non-negative".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Linear warmup `lr·epoch/warmup`, then a `decay_factor` step every
/// `decay_every` epochs.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch == 0 {
        return Err(Error::Contract("epochs are numbered from 1".into()));
    }
    let lr = cfg.learning_rate;
    if epoch <= cfg.warmup_epochs {
        return Ok(lr * epoch as f64 / cfg.warmup_epochs as f64);
    }
    let steps = (epoch - cfg.warmup_epochs - 1) / cfg.decay_every;
    Ok(lr * cfg.decay_factor.powi(steps as i32))
}

#[cfg(test)]
mod tests;
