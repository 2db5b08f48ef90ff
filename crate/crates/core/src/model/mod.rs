//! CNN encoder, transformer decoder and the matched/mismatched pair classifier.

mod decoder;
mod encoder;
mod greedy;
mod layout;

pub use decoder::{last_index, positional_encoding};
pub use greedy::greedy_decode;
pub use layout::Network;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{MelSpectrogram, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Output channels of the four conv blocks.
    pub channels: Vec<usize>,
    /// Pool after all four blocks (×16 reduction) instead of only between them (×8).
    pub pool_after_every_block: bool,
    /// Applied after each pooling layer and after the first fully connected layer.
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: vec![64, 128, 256, 512],
            pool_after_every_block: false,
            dropout: 0.2,
        }
    }
}

impl EncoderConfig {
    pub fn pools(&self) -> usize {
        if self.pool_after_every_block {
            4
        } else {
            3
        }
    }

    /// Time (and frequency) reduction factor.
    pub fn reduction(&self) -> usize {
        1 << self.pools()
    }

    /// Pooled time steps for an input of `frames` frames.
    pub fn latent_len(&self, frames: usize) -> usize {
        frames / self.reduction()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub blocks: usize,
    pub heads: usize,
    pub width: usize,
    pub ff_width: usize,
    pub dropout: f64,
    pub max_len: usize,
    /// Keep the token table fixed at its initial (word2vec) values.
    pub freeze_embeddings: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            blocks: 2,
            heads: 4,
            width: 128,
            ff_width: 512,
            dropout: 0.2,
            max_len: 35,
            freeze_embeddings: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    /// A small model that trains in seconds on a single core.
    pub fn micro() -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                channels: vec![4, 8, 8, 16],
                pool_after_every_block: false,
                dropout: 0.0,
            },
            decoder: DecoderConfig {
                blocks: 2,
                heads: 4,
                width: 32,
                ff_width: 64,
                dropout: 0.0,
                max_len: 35,
                freeze_embeddings: false,
            },
        }
    }

    /// The smallest configuration used for full-model gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                channels: vec![2, 2, 2, 2],
                pool_after_every_block: false,
                dropout: 0.0,
            },
            decoder: DecoderConfig {
                blocks: 2,
                heads: 2,
                width: 8,
                ff_width: 16,
                dropout: 0.0,
                max_len: 35,
                freeze_embeddings: false,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let d = &self.decoder;
        if e.channels.len() != 4 || e.channels.contains(&0) {
            return Err(Error::Config(format!(
                "encoder needs 4 positive channel counts, got {:?}",
                e.channels
            )));
        }
        if d.blocks == 0 || d.width == 0 || d.ff_width == 0 || d.max_len == 0 {
            return Err(Error::Config("decoder sizes must be positive".into()));
        }
        if d.heads == 0 || !d.width.is_multiple_of(d.heads) {
            return Err(Error::Config(format!(
                "decoder width {} not divisible by {} heads",
                d.width, d.heads
            )));
        }
        for (what, rate) in [("encoder", e.dropout), ("decoder", d.dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{what} dropout {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Network layout plus its parameters at one precision.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub net: Network,
    pub params: ParamStore<T>,
}

impl<T: Real> Model<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, vocab_size: usize, rng: &mut R) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = Network::init(cfg, vocab_size, &mut params, rng)?;
        Ok(Model { net, params })
    }

    /// Binds a layout to an existing store, checking every name and shape.
    pub fn from_params(cfg: &ModelConfig, vocab_size: usize, params: ParamStore<T>) -> Result<Self> {
        let net = Network::bind(cfg, vocab_size, &params)?;
        Ok(Model { net, params })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }
}

/// Stacks spectrograms into `[N × 1 × bands × W]`, padding shorter ones at
/// the end with the log floor. Returns the tensor and each input's frame count.
pub fn mel_batch<T: Real>(mels: &[&MelSpectrogram]) -> Result<(Tensor<T>, Vec<usize>)> {
    let first = mels
        .first()
        .ok_or_else(|| Error::Input("empty spectrogram batch".into()))?;
    let bands = first.bands;
    if let Some(m) = mels.iter().find(|m| m.bands != bands) {
        return Err(Error::Shape(format!(
            "spectrograms with {} and {} bands in one batch",
            bands, m.bands
        )));
    }
    let width = mels.iter().map(|m| m.frames).max().unwrap_or(0);
    let fill = LOG_FLOOR.ln() as f32;
    let mut data = Vec::with_capacity(mels.len() * bands * width);
    for m in mels {
        let padded;
        let src = if m.frames == width {
            *m
        } else {
            padded = m.fit_frames(width, fill);
            &padded
        };
        data.extend(src.data.iter().map(|&v| T::of(v as f64)));
    }
    let frames = mels.iter().map(|m| m.frames).collect();
    Ok((Tensor::new(&[mels.len(), 1, bands, width], data)?, frames))
}
