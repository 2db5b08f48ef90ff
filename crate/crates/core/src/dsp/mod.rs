//! Log-mel features and SpecAugment.

mod augment;
mod mel;
mod stft;
mod wav;

pub use augment::{spec_augment, spec_augment_with_masks, AppliedMask, MaskAxis, SpecAugmentConfig};
pub use mel::{hz_to_mel, log_mel, log_mel_with, mel_to_hz, MelFilterbank, MelSpectrogram};
pub use stft::{stft_power, PowerSpectrogram};
pub use wav::{decode_wav, read_wav, write_wav};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAME_SIZE: usize = 1024;
pub const HOP_SIZE: usize = 512;
pub const N_MELS: usize = 64;
pub const LOG_FLOOR: f64 = 1e-10;

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scaled(&self, gain: f32) -> AudioClip {
        AudioClip {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Feature-extraction settings. Defaults: 64 mel bands, 1024-sample Hann
/// frames, hop 512, 0 Hz to Nyquist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub n_mels: usize,
    pub frame_size: usize,
    pub hop_size: usize,
    pub f_min: f64,
    /// `None` means the Nyquist frequency of each clip.
    pub f_max: Option<f64>,
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            n_mels: N_MELS,
            frame_size: FRAME_SIZE,
            hop_size: HOP_SIZE,
            f_min: 0.0,
            f_max: None,
            log_floor: LOG_FLOOR,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.frame_size < 2 || self.hop_size == 0 {
            return Err(Error::Config(format!("invalid dsp settings {self:?}")));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of frames for a clip of `len` samples (no centre padding).
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.frame_size).then(|| (len - self.frame_size) / self.hop_size + 1)
    }
}
