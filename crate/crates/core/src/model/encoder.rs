use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real, RunningStats, Tape, Tensor, Var};

use super::layout::{BatchNorm, Linear, Network};

impl Network {
    /// Runs the CNN over `[N × 1 × bands × W]` and returns one `[W′ × width]`
    /// latent per example, where `W′ = frames[i] / reduction`.
    pub fn encode<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        input: Tensor<T>,
        frames: &[usize],
        rng: &mut R,
    ) -> Result<Vec<Var>> {
        let cfg = &self.cfg.encoder;
        let shape = input.shape().to_vec();
        if shape.len() != 4 || shape[1] != 1 {
            return Err(Error::Shape(format!(
                "encoder input must be [N × 1 × bands × frames], got {shape:?}"
            )));
        }
        let (n, bands, width) = (shape[0], shape[2], shape[3]);
        if frames.len() != n {
            return Err(Error::Shape(format!(
                "{n} spectrograms but {} frame counts",
                frames.len()
            )));
        }
        let factor = cfg.reduction();
        let shortest = frames.iter().copied().min().unwrap_or(0);
        if shortest < factor || bands < factor {
            return Err(Error::Input(format!(
                "encoder needs at least {factor} frames and {factor} bands, got {shortest} frames and {bands} bands"
            )));
        }
        if frames.iter().any(|&f| f > width) {
            return Err(Error::Shape("frame count exceeds padded width".into()));
        }

        let mut x = tape.leaf(input);
        for b in 0..4 {
            for j in 0..2 {
                let (kernel, bn) = self.enc.convs[2 * b + j];
                let k = tape.param(store, kernel);
                x = tape.conv2d(x, k)?;
                x = batch_norm(tape, store, x, bn)?;
                x = tape.relu(x);
            }
            if b < cfg.pools() {
                x = tape.avg_pool_2x2(x)?;
                x = tape.dropout(x, cfg.dropout, rng)?;
            }
        }
        // [N, C, H', W'] -> [N, W', C]
        let x = tape.mean_axis(x, 2)?;
        let x = tape.transpose(x)?;
        let s = tape.shape(x).to_vec();
        let (steps, chans) = (s[1], s[2]);
        let x = tape.reshape(x, &[n * steps, chans])?;
        let x = linear(tape, store, x, self.enc.fc1)?;
        let x = tape.relu(x);
        let x = tape.dropout(x, cfg.dropout, rng)?;
        let x = linear(tape, store, x, self.enc.fc2)?;
        let out_w = self.width();

        let mut latents = Vec::with_capacity(n);
        for (i, &f) in frames.iter().enumerate() {
            let zi = tape.narrow(x, i * steps, steps)?;
            let keep = f / factor;
            let zi = if keep < steps {
                tape.narrow(zi, 0, keep)?
            } else {
                zi
            };
            debug_assert_eq!(tape.shape(zi), &[keep, out_w]);
            latents.push(zi);
        }
        Ok(latents)
    }
}

pub(crate) fn linear<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, l: Linear) -> Result<Var> {
    let w = tape.param(store, l.w);
    let b = tape.param(store, l.b);
    tape.linear(x, w, b)
}

fn batch_norm<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, bn: BatchNorm) -> Result<Var> {
    let gamma = tape.param(store, bn.norm.gamma);
    let beta = tape.param(store, bn.norm.beta);
    let stats = RunningStats {
        mean_id: bn.mean,
        var_id: bn.var,
        mean: store.value(bn.mean),
        var: store.value(bn.var),
    };
    tape.batch_norm(x, gamma, beta, Some(stats))
}
