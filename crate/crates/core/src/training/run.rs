use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{spec_augment, MelSpectrogram, SpecAugmentConfig};
use crate::error::{Error, Result};
use crate::model::{last_index, mel_batch, Model};
use crate::numerics::{Real, Tape};
use crate::text::TokenSeq;

use super::{
    batch_loss, clip_global_norm, lr_schedule, make_negatives, sample_positives, Adam, ClipData,
    GateMode, LossOptions, StepLog, TrainConfig, TrainingExample,
};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    /// Mean total loss of each epoch, in order.
    pub epoch_totals: Vec<f64>,
    /// Mean captioning loss of each epoch over batches that had matched pairs.
    pub epoch_ce: Vec<f64>,
}

/// Runs `cfg.epochs` epochs of mini-batch Adam. Matched captions are drawn
/// one per clip per epoch and negatives are redrawn every epoch. `on_step`
/// sees every logged step; `on_epoch` runs after each epoch.
pub fn train<S, E>(
    clips: &[ClipData],
    model: &mut Model<f32>,
    cfg: &TrainConfig,
    mut on_step: S,
    mut on_epoch: E,
) -> Result<TrainReport>
where
    S: FnMut(&StepLog) -> Result<()>,
    E: FnMut(usize, &Model<f32>) -> Result<()>,
{
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let opts = LossOptions {
        contrastive: cfg.contrastive,
        gate: GateMode::Skip,
    };
    let mut report = TrainReport::default();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let lr = lr_schedule(epoch, cfg)?;
        let mut examples = sample_positives(clips, &mut rng)?;
        examples.shuffle(&mut rng);
        if cfg.contrastive {
            examples = make_negatives(clips, &examples, cfg.negative_ratio, &mut rng)?;
        }
        let (mut total_sum, mut ce_sum, mut ce_batches, mut batches) = (0.0, 0.0, 0, 0);
        for chunk in examples.chunks(cfg.batch_size) {
            step += 1;
            let batch: Vec<TrainingExample> = if cfg.spec_augment {
                chunk
                    .iter()
                    .map(|e| {
                        let aug = SpecAugmentConfig::default_for(e.mel.bands, e.mel.frames);
                        let mel = spec_augment(&e.mel, &aug, &mut rng)?;
                        Ok(TrainingExample {
                            mel: Arc::new(mel),
                            ..e.clone()
                        })
                    })
                    .collect::<Result<_>>()?
            } else {
                chunk.to_vec()
            };
            let mut tape = Tape::new(true);
            let (loss, parts) = batch_loss(&model.net, &mut tape, &model.params, &batch, opts, &mut rng)?;
            if !parts.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {} at step {step} (epoch {epoch})",
                    parts.total
                )));
            }
            tape.backward(loss, &mut model.params)?;
            tape.apply_buffer_updates(&mut model.params)?;
            if let Some(max) = cfg.clip_norm {
                let norm = clip_global_norm(&mut model.params, max);
                if !norm.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient norm at step {step} (epoch {epoch})"
                    )));
                }
            }
            adam.step(&mut model.params, lr)?;
            let row = StepLog {
                step,
                epoch,
                lr,
                ce: parts.ce,
                cl: parts.cl,
                total: parts.total,
            };
            on_step(&row)?;
            report.steps.push(row);
            total_sum += parts.total;
            if let Some(ce) = parts.ce {
                ce_sum += ce;
                ce_batches += 1;
            }
            batches += 1;
        }
        report.epoch_totals.push(total_sum / batches as f64);
        report.epoch_ce.push(if ce_batches > 0 {
            ce_sum / ce_batches as f64
        } else {
            f64::NAN
        });
        on_epoch(epoch, model)?;
    }
    Ok(report)
}

/// Eval-mode probability that `tokens` does not describe `mel`.
pub fn pair_probability<T: Real>(model: &Model<T>, mel: &MelSpectrogram, tokens: &TokenSeq) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tape = Tape::new(false);
    let (input, frames) = mel_batch::<T>(&[mel])?;
    let z = model.net.encode(&mut tape, &model.params, input, &frames, &mut rng)?[0];
    let inputs = tokens.inputs();
    let r = model.net.decode_states(&mut tape, &model.params, z, inputs, &mut rng)?;
    let last = last_index(inputs).ok_or_else(|| Error::Input("caption is all padding".into()))?;
    let p = model.net.classify_pair(&mut tape, &model.params, r, last)?;
    Ok(tape.value(p).item()?.as_f64())
}
