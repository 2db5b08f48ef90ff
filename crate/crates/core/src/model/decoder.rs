use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{AttnMask, ParamStore, Real, Tape, Tensor, Var};
use crate::text::PAD;

use super::encoder::linear;
use super::layout::{Attention, Network, Norm};

/// Sinusoidal position table `[len × width]`.
pub fn positional_encoding<T: Real>(len: usize, width: usize) -> Tensor<T> {
    Tensor::from_fn(&[len, width], |i| {
        let (pos, k) = (i / width, i % width);
        let angle = pos as f64 / 10000f64.powf((k - k % 2) as f64 / width as f64);
        T::of(if k % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

impl Network {
    /// Decoder states `R = [M × width]` for input ids `[M]` attending to the
    /// latent `z = [W′ × width]`. Row `m` sees input positions `≤ m` only;
    /// trailing `<pad>` ids are excluded as attention keys.
    pub fn decode_states<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        z: Var,
        ids: &[usize],
        rng: &mut R,
    ) -> Result<Var> {
        let cfg = &self.cfg.decoder;
        if ids.is_empty() {
            return Err(Error::Input("decoder needs at least one input token".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::Input(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        let zs = tape.shape(z).to_vec();
        if zs.len() != 2 || zs[1] != cfg.width {
            return Err(Error::Shape(format!(
                "latent must be [steps × {}], got {zs:?}",
                cfg.width
            )));
        }
        let m = ids.len();
        let keep: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();
        let self_mask = AttnMask::causal(m).with_key_padding(&keep);
        let cross_mask = AttnMask::full(m, zs[0]);

        let table = tape.param(store, self.dec.embed);
        let e = tape.embedding(table, ids)?;
        let e = tape.scale(e, (cfg.width as f64).sqrt());
        let pe = tape.leaf(positional_encoding(m, cfg.width));
        let x = tape.add(e, pe)?;
        let mut x = tape.dropout(x, cfg.dropout, rng)?;

        for block in &self.dec.blocks {
            let h = layer_norm(tape, store, x, block.ln_self)?;
            let h = attend(tape, store, h, h, &self_mask, block.self_attn, cfg.heads)?;
            let h = tape.dropout(h, cfg.dropout, rng)?;
            x = tape.add(x, h)?;

            let h = layer_norm(tape, store, x, block.ln_cross)?;
            let h = attend(tape, store, h, z, &cross_mask, block.cross_attn, cfg.heads)?;
            let h = tape.dropout(h, cfg.dropout, rng)?;
            x = tape.add(x, h)?;

            let h = layer_norm(tape, store, x, block.ln_ff)?;
            let h = linear(tape, store, h, block.ff_in)?;
            let h = tape.relu(h);
            let h = linear(tape, store, h, block.ff_out)?;
            let h = tape.dropout(h, cfg.dropout, rng)?;
            x = tape.add(x, h)?;
        }
        layer_norm(tape, store, x, self.dec.ln_final)
    }

    /// Next-token logits `[M × V]`.
    pub fn project_vocab<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, r: Var) -> Result<Var> {
        linear(tape, store, r, self.dec.head)
    }

    /// Classifier logit `[1 × 1]` read from row `last_index` of `R`.
    pub fn classify_logit<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        r: Var,
        last_index: usize,
    ) -> Result<Var> {
        let rows = tape.shape(r)[0];
        if last_index >= rows {
            return Err(Error::Contract(format!(
                "last index {last_index} outside {rows} decoder states"
            )));
        }
        let r_last = tape.narrow(r, last_index, 1)?;
        linear(tape, store, r_last, self.classifier)
    }

    /// Probability that the pair is mismatched, `σ(f(r_last))`.
    pub fn classify_pair<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        r: Var,
        last_index: usize,
    ) -> Result<Var> {
        let logit = self.classify_logit(tape, store, r, last_index)?;
        Ok(tape.sigmoid(logit))
    }
}

/// Position of the last non-pad id.
pub fn last_index(ids: &[usize]) -> Option<usize> {
    ids.iter().rposition(|&i| i != PAD)
}

fn layer_norm<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, n: Norm) -> Result<Var> {
    let g = tape.param(store, n.gamma);
    let b = tape.param(store, n.beta);
    tape.layer_norm(x, g, b)
}

fn attend<T: Real>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: Var,
    memory: Var,
    mask: &AttnMask,
    a: Attention,
    heads: usize,
) -> Result<Var> {
    let q = linear(tape, store, x, a.q)?;
    let wk = tape.param(store, a.k);
    let k = tape.matmul(memory, wk)?;
    let v = linear(tape, store, memory, a.v)?;
    let o = tape.attention(q, k, v, mask, heads)?;
    linear(tape, store, o, a.o)
}
