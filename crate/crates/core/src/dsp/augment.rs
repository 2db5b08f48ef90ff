use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::MelSpectrogram;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecAugmentConfig {
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
    pub n_time_masks: usize,
    pub max_time_width: usize,
}

impl SpecAugmentConfig {
    pub const NONE: SpecAugmentConfig = SpecAugmentConfig {
        n_freq_masks: 0,
        max_freq_width: 0,
        n_time_masks: 0,
        max_time_width: 0,
    };

    /// Two frequency masks up to 8 bands wide and two time masks up to
    /// one eighth of the clip.
    pub fn default_for(bands: usize, frames: usize) -> Self {
        SpecAugmentConfig {
            n_freq_masks: 2,
            max_freq_width: 8.min(bands),
            n_time_masks: 2,
            max_time_width: frames / 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAxis {
    Frequency,
    Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppliedMask {
    pub axis: MaskAxis,
    pub start: usize,
    pub width: usize,
}

pub fn spec_augment<R: Rng + ?Sized>(
    mel: &MelSpectrogram,
    cfg: &SpecAugmentConfig,
    rng: &mut R,
) -> Result<MelSpectrogram> {
    spec_augment_with_masks(mel, cfg, rng).map(|(m, _)| m)
}

/// Frequency masks are drawn first, then time masks. Each mask has a width
/// uniform in `[0, max]` and a start uniform over valid offsets; masked
/// cells take the spectrogram's mean value.
pub fn spec_augment_with_masks<R: Rng + ?Sized>(
    mel: &MelSpectrogram,
    cfg: &SpecAugmentConfig,
    rng: &mut R,
) -> Result<(MelSpectrogram, Vec<AppliedMask>)> {
    if cfg.max_freq_width > mel.bands || cfg.max_time_width > mel.frames {
        return Err(Error::Config(format!(
            "SpecAugment widths {}/{} exceed spectrogram {}×{}",
            cfg.max_freq_width, cfg.max_time_width, mel.bands, mel.frames
        )));
    }
    let fill = mel.mean();
    let mut out = mel.clone();
    let mut masks = Vec::new();
    let mut draw = |axis, count: usize, max: usize, extent: usize, rng: &mut R| {
        for _ in 0..count {
            let width = rng.random_range(0..=max);
            let start = rng.random_range(0..=extent - width);
            masks.push(AppliedMask { axis, start, width });
        }
    };
    draw(MaskAxis::Frequency, cfg.n_freq_masks, cfg.max_freq_width, mel.bands, rng);
    draw(MaskAxis::Time, cfg.n_time_masks, cfg.max_time_width, mel.frames, rng);
    for m in &masks {
        match m.axis {
            MaskAxis::Frequency => {
                for b in m.start..m.start + m.width {
                    out.data[b * mel.frames..(b + 1) * mel.frames].fill(fill);
                }
            }
            MaskAxis::Time => {
                for b in 0..mel.bands {
                    out.data[b * mel.frames + m.start..b * mel.frames + m.start + m.width].fill(fill);
                }
            }
        }
    }
    Ok((out, masks))
}
