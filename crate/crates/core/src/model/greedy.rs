use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::MelSpectrogram;
use crate::error::Result;
use crate::numerics::{Real, Tape};
use crate::text::{EOS, SOS};

use super::{mel_batch, Model};

/// Greedy inference: starting from `<sos>`, appends the argmax token until
/// `<eos>` or `max_len` tokens. The returned ids exclude `<sos>` and `<eos>`.
pub fn greedy_decode<T: Real>(model: &Model<T>, mel: &MelSpectrogram, max_len: usize) -> Result<Vec<usize>> {
    let net = &model.net;
    let store = &model.params;
    // Dropout is inactive in eval mode; the generator is never drawn from.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (input, frames) = mel_batch::<T>(&[mel])?;
    let z = {
        let mut tape = Tape::new(false);
        let zs = net.encode(&mut tape, store, input, &frames, &mut rng)?;
        tape.value(zs[0]).clone()
    };
    let mut ids = vec![SOS];
    let mut out = Vec::new();
    while out.len() < max_len {
        let mut tape = Tape::new(false);
        let zv = tape.leaf(z.clone());
        let r = net.decode_states(&mut tape, store, zv, &ids, &mut rng)?;
        let last = tape.narrow(r, ids.len() - 1, 1)?;
        let logits = net.project_vocab(&mut tape, store, last)?;
        let next = argmax(tape.value(logits).data());
        if next == EOS {
            break;
        }
        ids.push(next);
        out.push(next);
    }
    Ok(out)
}

/// First index of the maximum.
pub(crate) fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
