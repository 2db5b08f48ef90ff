use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::AudioClip;

/// `|DFT|²` per frame, stored bin-major: `data[bin * frames + frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.frames + frame]
    }
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time power spectrum without centre padding: frame `t` covers
/// samples `t·hop .. t·hop + frame`.
pub fn stft_power(clip: &AudioClip, frame: usize, hop: usize) -> Result<PowerSpectrogram> {
    if hop == 0 || frame < 2 {
        return Err(Error::Config(format!("invalid framing {frame}/{hop}")));
    }
    if clip.len() < frame {
        return Err(Error::Input(format!(
            "clip has {} samples, shorter than one {frame}-sample frame",
            clip.len()
        )));
    }
    let frames = (clip.len() - frame) / hop + 1;
    let bins = frame / 2 + 1;
    let window = hann(frame);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame);
    let mut buf = vec![Complex::new(0.0, 0.0); frame];
    let mut data = vec![0.0; bins * frames];
    let samples = clip.samples();
    for t in 0..frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(samples[start + i] as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, c) in buf.iter().take(bins).enumerate() {
            data[k * frames + t] = c.norm_sqr();
        }
    }
    Ok(PowerSpectrogram { bins, frames, data })
}
