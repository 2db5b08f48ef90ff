use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::MelSpectrogram;
use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::numerics::gradcheck::DEFAULT_EPS;
use crate::numerics::suite::{check_primitive, PRIMITIVE_FAMILIES};
use crate::numerics::{finite_diff_check, GradCheck, OpKind, Tape};
use crate::text::{TokenSeq, EOS, SOS};

use super::{batch_loss, LossOptions, TrainingExample};

/// Pass threshold on the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-5;

const FULL_MODEL_SEED: u64 = 0;

/// One row of the gradient report.
#[derive(Clone, Debug, PartialEq)]
pub struct GradRow {
    pub family: String,
    pub check: GradCheck,
    pub passed: bool,
}

/// Checks the joint loss of a matched and a mismatched pair through the
/// whole tiny model (channels [2,2,2,2], width 8, six-word vocabulary) in
/// 64-bit precision.
/// The instance is fixed: with ReLU in the network some random instances
/// put a pre-activation within `eps` of zero, where central differences are
/// meaningless.
pub fn full_model_check(fault: Option<OpKind>) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(FULL_MODEL_SEED);
    let mut model = Model::<f64>::new(&ModelConfig::tiny(), 6, &mut rng)?;
    // Zero biases and unit gains put ReLU inputs exactly on the kink
    // whenever a whole upstream feature map is inactive.
    for p in model.params.iter_mut().filter(|p| p.trainable) {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let mut mel = |frames: usize| -> Result<Arc<MelSpectrogram>> {
        let data = (0..16 * frames).map(|_| rng.random_range(-3.0f32..1.0)).collect();
        Ok(Arc::new(MelSpectrogram::new(16, frames, data)?))
    };
    let batch = vec![
        TrainingExample {
            mel: mel(16)?,
            tokens: TokenSeq::new(vec![SOS, 4, 5, EOS])?,
            y: 0,
            clip_id: 0,
        },
        TrainingExample {
            mel: mel(19)?,
            tokens: TokenSeq::new(vec![SOS, 5, 4, 4, EOS])?,
            y: 1,
            clip_id: 1,
        },
    ];
    let net = model.net.clone();
    finite_diff_check(&mut model.params, DEFAULT_EPS, |store| {
        let mut tape = Tape::new(true);
        if let Some(k) = fault {
            tape.inject_fault(k);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (loss, _) = batch_loss(&net, &mut tape, store, &batch, LossOptions::default(), &mut rng)?;
        Ok((tape, loss))
    })
}

/// Every primitive family followed by the full model. `fault` corrupts one
/// operation's backward rule in all rows.
pub fn gradient_report(fault: Option<OpKind>) -> Result<Vec<GradRow>> {
    let mut rows = Vec::with_capacity(PRIMITIVE_FAMILIES.len() + 1);
    for &family in PRIMITIVE_FAMILIES {
        rows.push(row(family, check_primitive(family, fault)?));
    }
    rows.push(row("full_model", full_model_check(fault)?));
    Ok(rows)
}

fn row(family: &str, check: GradCheck) -> GradRow {
    GradRow {
        family: family.to_string(),
        passed: check.max_rel_error < GRAD_TOLERANCE,
        check,
    }
}
