use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{write_wav, AudioClip};
use crate::error::{Error, Result};

use super::manifest::{load_manifest, write_manifest, DatasetManifest, ManifestRow, CAPTION_COLUMNS};

/// Beeping sine tones, or band-limited noise bursts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grammar {
    Tone,
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pitch {
    Low,
    Middle,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tempo {
    Slow,
    Fast,
}

const PITCHES: [Pitch; 3] = [Pitch::Low, Pitch::Middle, Pitch::High];
const TEMPOS: [Tempo; 2] = [Tempo::Slow, Tempo::Fast];
pub(crate) const MAX_EVENTS: usize = 4;

/// What happens in one clip. The caption is a function of these fields only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SynthEvent {
    pub grammar: Grammar,
    /// Number of bursts, 1..=4.
    pub count: usize,
    pub pitch: Pitch,
    pub tempo: Tempo,
}

impl SynthEvent {
    pub fn caption(&self) -> String {
        match self.grammar {
            Grammar::Tone => {
                let pitch = match self.pitch {
                    Pitch::Low => "low",
                    Pitch::Middle => "middle",
                    Pitch::High => "high",
                };
                let times = ["once", "twice", "three times", "four times"][self.count - 1];
                let tempo = match self.tempo {
                    Tempo::Slow => "slowly",
                    Tempo::Fast => "quickly",
                };
                format!("a {pitch} tone beeps {times} {tempo}")
            }
            Grammar::Noise => {
                let count = ["one", "two", "three", "four"][self.count - 1];
                let texture = match self.pitch {
                    Pitch::Low => "rumbling",
                    Pitch::Middle => "rustling",
                    Pitch::High => "hissing",
                };
                let bursts = if self.count == 1 { "burst" } else { "bursts" };
                let tempo = match self.tempo {
                    Tempo::Slow => "slow",
                    Tempo::Fast => "quick",
                };
                format!("{count} {texture} {bursts} of noise in {tempo} succession")
            }
        }
    }

    /// Every event a grammar can produce.
    pub fn all(grammar: Grammar) -> Vec<SynthEvent> {
        let mut out = Vec::new();
        for count in 1..=MAX_EVENTS {
            for pitch in PITCHES {
                for tempo in TEMPOS {
                    out.push(SynthEvent {
                        grammar,
                        count,
                        pitch,
                        tempo,
                    });
                }
            }
        }
        out
    }

    fn random<R: Rng + ?Sized>(grammar: Grammar, rng: &mut R) -> Self {
        SynthEvent {
            grammar,
            count: rng.random_range(1..=MAX_EVENTS),
            pitch: PITCHES[rng.random_range(0..PITCHES.len())],
            tempo: TEMPOS[rng.random_range(0..TEMPOS.len())],
        }
    }

    fn frequency(&self) -> f64 {
        match self.pitch {
            Pitch::Low => 300.0,
            Pitch::Middle => 900.0,
            Pitch::High => 2700.0,
        }
    }

    fn render<R: Rng + ?Sized>(&self, spec: &SynthSpec, rng: &mut R) -> Vec<f32> {
        let sr = spec.sample_rate as f64;
        let n = (spec.seconds * sr).round() as usize;
        let hiss = Normal::new(0.0, 0.003).expect("valid std");
        let mut out: Vec<f64> = (0..n).map(|_| hiss.sample(rng)).collect();
        let burst = (BURST_SECONDS * sr) as usize;
        let edge = (0.01 * sr) as usize;
        let interval = match self.tempo {
            Tempo::Slow => 0.45,
            Tempo::Fast => 0.3,
        };
        let start = 0.1 + rng.random_range(0.0..0.05);
        let amp = rng.random_range(0.3..0.6);
        let f = self.frequency();
        let mut bp = Bandpass::new(f, sr);
        for k in 0..self.count {
            let at = ((start + k as f64 * interval) * sr) as usize;
            for j in 0..burst {
                let env = if j < edge {
                    0.5 - 0.5 * (PI * j as f64 / edge as f64).cos()
                } else if burst - j < edge {
                    0.5 - 0.5 * (PI * (burst - j) as f64 / edge as f64).cos()
                } else {
                    1.0
                };
                let s = match self.grammar {
                    Grammar::Tone => (2.0 * PI * f * j as f64 / sr).sin(),
                    Grammar::Noise => 3.0 * bp.step(rng.random_range(-1.0..1.0)),
                };
                if let Some(o) = out.get_mut(at + j) {
                    *o += amp * env * s;
                }
            }
        }
        out.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect()
    }
}

const BURST_SECONDS: f64 = 0.12;

/// Constant-peak-gain band-pass biquad, Q = 1.
struct Bandpass {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Bandpass {
    fn new(f: f64, sr: f64) -> Self {
        let w = 2.0 * PI * f / sr;
        let alpha = w.sin() / 2.0;
        let a0 = 1.0 + alpha;
        Bandpass {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w.cos() / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1] - self.a[0] * self.y[0] - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub sample_rate: u32,
    pub seconds: f64,
    /// Clip `i` uses `grammars[i % grammars.len()]`.
    pub grammars: Vec<Grammar>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_clips: 8,
            sample_rate: 16000,
            seconds: 2.0,
            grammars: vec![Grammar::Tone, Grammar::Noise],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clips == 0 || self.grammars.is_empty() {
            return Err(Error::Config("synthetic set needs clips and at least one grammar".into()));
        }
        if self.sample_rate < 8000 {
            return Err(Error::Config("synthetic sample rate must be at least 8 kHz".into()));
        }
        // four slow bursts must fit
        if !(self.seconds >= 1.7) {
            return Err(Error::Config("synthetic clips must last at least 1.7 s".into()));
        }
        Ok(())
    }

    /// The event of every clip, in order.
    pub fn events(&self) -> Vec<SynthEvent> {
        self.generate(|_, _| Ok(())).expect("no sink errors")
    }

    fn generate(&self, mut sink: impl FnMut(&SynthEvent, Vec<f32>) -> Result<()>) -> Result<Vec<SynthEvent>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_clips)
            .map(|i| {
                let ev = SynthEvent::random(self.grammars[i % self.grammars.len()], &mut rng);
                sink(&ev, ev.render(self, &mut rng))?;
                Ok(ev)
            })
            .collect()
    }
}

/// Writes `audio/synth_NNNN.wav` and `synth.csv` (every caption column holds
/// the clip's caption) under `out_dir`, then loads the manifest back.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<(DatasetManifest, Vec<SynthEvent>)> {
    spec.validate()?;
    let audio = out_dir.join("audio");
    fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let mut rows = Vec::with_capacity(spec.n_clips);
    let events = spec.generate(|ev, samples| {
        let file_name = format!("synth_{:04}.wav", rows.len());
        let path = audio.join(&file_name);
        write_wav(&path, &AudioClip::new(samples, spec.sample_rate)?)?;
        rows.push(ManifestRow {
            file_name,
            path,
            captions: vec![ev.caption(); CAPTION_COLUMNS],
        });
        Ok(())
    })?;
    let csv = out_dir.join("synth.csv");
    write_manifest(&csv, &rows)?;
    Ok((load_manifest(&csv, &audio)?, events))
}
