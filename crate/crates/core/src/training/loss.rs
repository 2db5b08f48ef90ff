use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{last_index, mel_batch, Network};
use crate::numerics::{ParamStore, Real, Tape, Var};

use super::TrainingExample;

/// How the captioning term of a mismatched example is removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    /// The captioning branch is never built for `y = 1`.
    Skip,
    /// The branch is built and multiplied by `1 − y`.
    Multiply,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub contrastive: bool,
    pub gate: GateMode,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            contrastive: true,
            gate: GateMode::Skip,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Mean captioning loss over matched examples; `None` if there are none.
    pub ce: Option<f64>,
    /// Mean classifier loss; `None` when the contrastive term is off.
    pub cl: Option<f64>,
    pub total: f64,
    /// Target tokens scored by the captioning loss.
    pub tokens: usize,
}

/// Mean over active rows of `−log softmax(logits)[target]`.
pub fn ce_loss<T: Real>(tape: &mut Tape<T>, logits: Var, targets: &[usize], active: &[bool]) -> Result<Var> {
    tape.cross_entropy(logits, targets, active)
}

/// `−[y·ln p + (1−y)·ln(1−p)]` for `p ∈ (0,1)`.
pub fn cl_loss(p: f64, y: u8) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("pair probability {p} outside (0, 1)")));
    }
    Ok(if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
}

/// `(1−y)·ce + cl` for one example.
pub fn total_loss(ce: f64, cl: f64, y: u8) -> f64 {
    if y == 1 {
        cl
    } else {
        ce + cl
    }
}

/// Builds the batch objective `mean_i((1−y_i)·ce_i + cl_i)` on `tape`.
pub fn batch_loss<T: Real, R: Rng + ?Sized>(
    net: &Network,
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    batch: &[TrainingExample],
    opts: LossOptions,
    rng: &mut R,
) -> Result<(Var, LossBreakdown)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    if !opts.contrastive && batch.iter().any(|e| e.y == 1) {
        return Err(Error::Contract(
            "mismatched pairs need the contrastive term".into(),
        ));
    }
    let mels: Vec<_> = batch.iter().map(|e| e.mel.as_ref()).collect();
    let (input, frames) = mel_batch::<T>(&mels)?;
    let zs = net.encode(tape, store, input, &frames, rng)?;

    let (mut ce_sum, mut ce_count, mut cl_sum, mut tokens) = (0.0, 0usize, 0.0, 0usize);
    let mut sum: Option<Var> = None;
    for (e, &z) in batch.iter().zip(&zs) {
        let inputs = e.tokens.inputs();
        let targets = e.tokens.targets();
        let r = net.decode_states(tape, store, z, inputs, rng)?;
        let mut term = None;
        if e.y == 0 || opts.gate == GateMode::Multiply {
            let logits = net.project_vocab(tape, store, r)?;
            let active = vec![true; targets.len()];
            let ce = ce_loss(tape, logits, targets, &active)?;
            if e.y == 0 {
                ce_sum += tape.value(ce).item()?.as_f64();
                ce_count += 1;
                tokens += targets.len();
            }
            term = Some(match opts.gate {
                GateMode::Multiply => tape.scale(ce, 1.0 - e.y as f64),
                GateMode::Skip => ce,
            });
        }
        if opts.contrastive {
            let last = last_index(inputs).ok_or_else(|| Error::Input("caption is all padding".into()))?;
            let logit = net.classify_logit(tape, store, r, last)?;
            let cl = tape.bce_with_logits(logit, &[T::of(e.y as f64)])?;
            cl_sum += tape.value(cl).item()?.as_f64();
            term = Some(match term {
                Some(t) => tape.add(t, cl)?,
                None => cl,
            });
        }
        let term = term.expect("every example contributes a term");
        sum = Some(match sum {
            Some(s) => tape.add(s, term)?,
            None => term,
        });
    }
    let n = batch.len() as f64;
    let total = tape.scale(sum.expect("non-empty batch"), 1.0 / n);
    let breakdown = LossBreakdown {
        ce: (ce_count > 0).then(|| ce_sum / ce_count as f64),
        cl: opts.contrastive.then(|| cl_sum / n),
        total: tape.value(total).item()?.as_f64(),
        tokens,
    };
    Ok((total, breakdown))
}
