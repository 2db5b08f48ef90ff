use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Real, Tensor};
use crate::text::RESERVED;

use super::ModelConfig;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BatchNorm {
    pub norm: Norm,
    pub mean: ParamId,
    pub var: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Attention {
    pub q: Linear,
    /// Keys carry no bias: a shared offset shifts every score of a row
    /// equally and cancels in the softmax.
    pub k: ParamId,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub ln_self: Norm,
    pub self_attn: Attention,
    pub ln_cross: Norm,
    pub cross_attn: Attention,
    pub ln_ff: Norm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

#[derive(Clone, Debug)]
pub(crate) struct EncoderIds {
    /// Eight (kernel, batch norm) pairs, two per block.
    pub convs: Vec<(ParamId, BatchNorm)>,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderIds {
    pub embed: ParamId,
    pub blocks: Vec<Block>,
    pub ln_final: Norm,
    pub head: Linear,
}

/// Parameter handles for one model configuration. Holds no values; pair it
/// with a [`ParamStore`] laid out by [`Network::init`] or checked by
/// [`Network::bind`].
#[derive(Clone, Debug)]
pub struct Network {
    pub(crate) cfg: ModelConfig,
    pub(crate) vocab_size: usize,
    pub(crate) enc: EncoderIds,
    pub(crate) dec: DecoderIds,
    pub(crate) classifier: Linear,
}

#[derive(Clone, Copy)]
enum Init {
    /// Uniform in ±√(6/fan_in).
    Kaiming(usize),
    Normal(f64),
    Ones,
    Zeros,
}

/// Called once per parameter in a fixed order.
type Declare<'a> = dyn FnMut(&str, &[usize], Init, bool) -> Result<ParamId> + 'a;

impl Network {
    /// Adds freshly initialized parameters to `store`.
    pub fn init<T: Real, R: Rng + ?Sized>(
        cfg: &ModelConfig,
        vocab_size: usize,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Network> {
        let mut declare = |name: &str, shape: &[usize], init: Init, trainable: bool| {
            let n: usize = shape.iter().product();
            let data: Vec<T> = match init {
                Init::Kaiming(fan_in) => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
                }
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
                    (0..n).map(|_| T::of(dist.sample(rng))).collect()
                }
                Init::Ones => vec![T::one(); n],
                Init::Zeros => vec![T::zero(); n],
            };
            let value = Tensor::new(shape, data)?;
            if trainable {
                store.add(name, value)
            } else {
                store.add_buffer(name, value)
            }
        };
        Network::declare(cfg, vocab_size, &mut declare)
    }

    /// Resolves handles in a store that already holds this layout.
    pub fn bind<T: Real>(cfg: &ModelConfig, vocab_size: usize, store: &ParamStore<T>) -> Result<Network> {
        let mut declared = 0;
        let mut declare = |name: &str, shape: &[usize], _: Init, _: bool| {
            declared += 1;
            let id = store
                .id(name)
                .ok_or_else(|| Error::Format(format!("parameter {name:?} missing")))?;
            let found = store.value(id).shape();
            if found != shape {
                return Err(Error::Format(format!(
                    "parameter {name:?} has shape {found:?}, layout expects {shape:?}"
                )));
            }
            Ok(id)
        };
        let net = Network::declare(cfg, vocab_size, &mut declare)?;
        if store.len() != declared {
            return Err(Error::Format(format!(
                "store holds {} tensors, layout has {declared}",
                store.len()
            )));
        }
        Ok(net)
    }

    fn declare(cfg: &ModelConfig, vocab_size: usize, d: &mut Declare<'_>) -> Result<Network> {
        cfg.validate()?;
        if vocab_size < RESERVED.len() {
            return Err(Error::Config(format!(
                "vocabulary of {vocab_size} lacks the reserved tokens"
            )));
        }
        let width = cfg.decoder.width;
        let mut convs = Vec::with_capacity(8);
        let mut cin = 1;
        for (b, &cout) in cfg.encoder.channels.iter().enumerate() {
            for j in 0..2 {
                let p = format!("encoder.block{b}.conv{j}");
                let kernel = d(&format!("{p}.weight"), &[cout, cin, 3, 3], Init::Kaiming(cin * 9), true)?;
                let norm = Norm {
                    gamma: d(&format!("{p}.bn.gamma"), &[cout], Init::Ones, true)?,
                    beta: d(&format!("{p}.bn.beta"), &[cout], Init::Zeros, true)?,
                };
                let bn = BatchNorm {
                    norm,
                    mean: d(&format!("{p}.bn.running_mean"), &[cout], Init::Zeros, false)?,
                    var: d(&format!("{p}.bn.running_var"), &[cout], Init::Ones, false)?,
                };
                convs.push((kernel, bn));
                cin = cout;
            }
        }
        let enc = EncoderIds {
            convs,
            fc1: linear(d, "encoder.fc1", cin, cin)?,
            fc2: linear(d, "encoder.fc2", cin, width)?,
        };

        let embed = d(
            "decoder.embed",
            &[vocab_size, width],
            Init::Normal(0.02),
            !cfg.decoder.freeze_embeddings,
        )?;
        let mut blocks = Vec::with_capacity(cfg.decoder.blocks);
        for i in 0..cfg.decoder.blocks {
            let p = format!("decoder.block{i}");
            blocks.push(Block {
                ln_self: norm(d, &format!("{p}.ln_self"), width)?,
                self_attn: attention(d, &format!("{p}.self_attn"), width)?,
                ln_cross: norm(d, &format!("{p}.ln_cross"), width)?,
                cross_attn: attention(d, &format!("{p}.cross_attn"), width)?,
                ln_ff: norm(d, &format!("{p}.ln_ff"), width)?,
                ff_in: linear(d, &format!("{p}.ff_in"), width, cfg.decoder.ff_width)?,
                ff_out: linear(d, &format!("{p}.ff_out"), cfg.decoder.ff_width, width)?,
            });
        }
        let dec = DecoderIds {
            embed,
            blocks,
            ln_final: norm(d, "decoder.ln_final", width)?,
            head: linear(d, "decoder.head", width, vocab_size)?,
        };
        let classifier = linear(d, "classifier", width, 1)?;
        Ok(Network {
            cfg: cfg.clone(),
            vocab_size,
            enc,
            dec,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn width(&self) -> usize {
        self.cfg.decoder.width
    }

    /// Handle of the `[V × width]` token table.
    pub fn embedding_id(&self) -> ParamId {
        self.dec.embed
    }
}

fn linear(d: &mut Declare<'_>, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
    Ok(Linear {
        w: d(&format!("{name}.weight"), &[fan_in, fan_out], Init::Kaiming(fan_in), true)?,
        b: d(&format!("{name}.bias"), &[fan_out], Init::Zeros, true)?,
    })
}

fn norm(d: &mut Declare<'_>, name: &str, width: usize) -> Result<Norm> {
    Ok(Norm {
        gamma: d(&format!("{name}.gamma"), &[width], Init::Ones, true)?,
        beta: d(&format!("{name}.beta"), &[width], Init::Zeros, true)?,
    })
}

fn attention(d: &mut Declare<'_>, name: &str, width: usize) -> Result<Attention> {
    Ok(Attention {
        q: linear(d, &format!("{name}.wq"), width, width)?,
        k: d(&format!("{name}.wk.weight"), &[width, width], Init::Kaiming(width), true)?,
        v: linear(d, &format!("{name}.wv"), width, width)?,
        o: linear(d, &format!("{name}.wo"), width, width)?,
    })
}
