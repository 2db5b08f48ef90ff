use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

use super::stft::{stft_power, PowerSpectrogram};
use super::{AudioClip, DspConfig};

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the non-negative FFT bins, `[n_mels × bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub bins: usize,
    pub weights: Vec<f64>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    /// Filters have peaks equally spaced in mel between `f_min` and `f_max`.
    /// Each row is scaled so its largest sampled weight is exactly 1.
    pub fn new(n_mels: usize, sample_rate: u32, n_fft: usize, f_min: f64, f_max: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(Error::Config(format!(
                "mel range {f_min}..{f_max} Hz invalid for sample rate {sample_rate}"
            )));
        }
        let bins = n_fft / 2 + 1;
        let (mlo, mhi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let mut weights = vec![0.0; n_mels * bins];
        for m in 0..n_mels {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * bins..(m + 1) * bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let up = (f - lo) / (c - lo);
                let down = (hi - f) / (hi - c);
                *w = up.min(down).max(0.0);
            }
            let peak = row.iter().copied().fold(0.0, f64::max);
            if peak <= 0.0 {
                return Err(Error::Config(format!(
                    "mel band {m} ({lo:.1}-{hi:.1} Hz) contains no FFT bin; \
                     {n_mels} bands is too many for a {n_fft}-point FFT"
                )));
            }
            row.iter_mut().for_each(|w| *w /= peak);
        }
        Ok(MelFilterbank {
            n_mels,
            bins,
            weights,
            centers: edges[1..=n_mels].to_vec(),
        })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    /// Peak frequency (Hz) of each filter.
    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers
    }

    /// Band energies `[n_mels × frames]`, band-major.
    pub fn apply(&self, power: &PowerSpectrogram) -> Vec<f64> {
        assert_eq!(power.bins, self.bins);
        let frames = power.frames;
        let mut out = vec![0.0; self.n_mels * frames];
        for m in 0..self.n_mels {
            let dst = &mut out[m * frames..(m + 1) * frames];
            for (k, &w) in self.row(m).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &power.data[k * frames..(k + 1) * frames];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

/// Natural-log mel energies, band-major `[bands × frames]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub bands: usize,
    pub frames: usize,
    pub data: Vec<f32>,
}

impl MelSpectrogram {
    pub fn new(bands: usize, frames: usize, data: Vec<f32>) -> Result<Self> {
        if bands == 0 || frames == 0 || data.len() != bands * frames {
            return Err(Error::Shape(format!(
                "mel spectrogram {bands}×{frames} with {} values",
                data.len()
            )));
        }
        Ok(MelSpectrogram {
            bands,
            frames,
            data,
        })
    }

    #[inline]
    pub fn at(&self, band: usize, frame: usize) -> f32 {
        self.data[band * self.frames + frame]
    }

    pub fn mean(&self) -> f32 {
        (self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64) as f32
    }

    /// Pads with `fill` or crops along time to exactly `frames`.
    pub fn fit_frames(&self, frames: usize, fill: f32) -> MelSpectrogram {
        let mut data = Vec::with_capacity(self.bands * frames);
        for b in 0..self.bands {
            let row = &self.data[b * self.frames..(b + 1) * self.frames];
            let keep = frames.min(self.frames);
            data.extend_from_slice(&row[..keep]);
            data.extend(std::iter::repeat_n(fill, frames - keep));
        }
        MelSpectrogram {
            bands: self.bands,
            frames,
            data,
        }
    }

    /// `[1 × bands × frames]` tensor for one batch element.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_fn(&[1, self.bands, self.frames], |i| T::of(self.data[i] as f64))
    }
}

pub fn log_mel(clip: &AudioClip) -> Result<MelSpectrogram> {
    log_mel_with(clip, &DspConfig::default())
}

/// `ln(max(filterbank · |STFT|², floor))`.
pub fn log_mel_with(clip: &AudioClip, cfg: &DspConfig) -> Result<MelSpectrogram> {
    cfg.validate()?;
    let power = stft_power(clip, cfg.frame_size, cfg.hop_size)?;
    let f_max = cfg.f_max.unwrap_or(clip.sample_rate() as f64 / 2.0);
    let fb = MelFilterbank::new(cfg.n_mels, clip.sample_rate(), cfg.frame_size, cfg.f_min, f_max)?;
    let energies = fb.apply(&power);
    let data = energies
        .into_iter()
        .map(|e| e.max(cfg.log_floor).ln() as f32)
        .collect();
    MelSpectrogram::new(cfg.n_mels, power.frames, data)
}
