use std::path::Path;

use rand::Rng;
use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Word2VecMode {
    Cbow,
    SkipGram,
    /// Trains both from one shared initialization and averages the results.
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Word2VecConfig {
    pub mode: Word2VecMode,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dim: usize,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Word2VecConfig {
            mode: Word2VecMode::Both,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            dim: 128,
        }
    }
}

impl Word2VecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.negatives == 0 || self.dim == 0 {
            return Err(Error::Config(format!(
                "word2vec needs window, negatives and dim ≥ 1 (got {}/{}/{})",
                self.window, self.negatives, self.dim
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("word2vec learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major `[rows × dim]` word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, a: usize, b: usize) -> f32 {
        let (x, y) = (self.row(a), self.row(b));
        let dot: f32 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx: f32 = x.iter().map(|v| v * v).sum::<f32>().sqrt();
        let ny: f32 = y.iter().map(|v| v * v).sum::<f32>().sqrt();
        dot / (nx * ny).max(f32::MIN_POSITIVE)
    }
}

#[derive(Clone, Debug)]
pub struct Word2VecOutput {
    pub embeddings: EmbeddingMatrix,
    /// Mean negative-sampling loss per training pair, per epoch. Under
    /// `Both`, CBOW and skip-gram losses are averaged.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

struct Trainer<'a> {
    cfg: &'a Word2VecConfig,
    input: Vec<f32>,
    output: Vec<f32>,
    noise: &'a WeightedIndex<f64>,
    total_steps: f64,
    step: f64,
}

impl Trainer<'_> {
    fn lr(&self) -> f32 {
        let frac = (self.step / self.total_steps).min(1.0);
        (self.cfg.learning_rate * (1.0 - frac).max(1e-4)) as f32
    }

    /// One positive target plus sampled negatives against hidden vector `h`.
    /// Accumulates the hidden-vector gradient into `grad_h`; returns the loss.
    fn update<R: Rng + ?Sized>(&mut self, h: &[f32], target: usize, grad_h: &mut [f32], rng: &mut R) -> f64 {
        let dim = self.cfg.dim;
        let lr = self.lr();
        let mut loss = 0.0;
        for d in 0..=self.cfg.negatives {
            let (word, label) = if d == 0 {
                (target, 1.0)
            } else {
                let w = self.noise.sample(rng);
                if w == target {
                    continue;
                }
                (w, 0.0)
            };
            let out = &mut self.output[word * dim..(word + 1) * dim];
            let score: f32 = h.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
            let p = sigmoid(score);
            loss -= if label == 1.0 {
                (p.max(1e-7) as f64).ln()
            } else {
                ((1.0 - p).max(1e-7) as f64).ln()
            };
            let g = (label - p) * lr;
            for i in 0..dim {
                grad_h[i] += g * out[i];
                out[i] += g * h[i];
            }
        }
        loss
    }

    fn skip_gram_epoch<R: Rng + ?Sized>(&mut self, sentences: &[Vec<usize>], rng: &mut R) -> (f64, usize) {
        let dim = self.cfg.dim;
        let (mut loss, mut pairs) = (0.0, 0);
        let mut grad = vec![0.0f32; dim];
        for s in sentences {
            for (i, &center) in s.iter().enumerate() {
                let b = rng.random_range(1..=self.cfg.window);
                for j in i.saturating_sub(b)..(i + b + 1).min(s.len()) {
                    if j == i {
                        continue;
                    }
                    grad.fill(0.0);
                    let h = self.input[center * dim..(center + 1) * dim].to_vec();
                    loss += self.update(&h, s[j], &mut grad, rng);
                    pairs += 1;
                    for (v, g) in self.input[center * dim..(center + 1) * dim].iter_mut().zip(&grad) {
                        *v += g;
                    }
                }
                self.step += 1.0;
            }
        }
        (loss, pairs)
    }

    fn cbow_epoch<R: Rng + ?Sized>(&mut self, sentences: &[Vec<usize>], rng: &mut R) -> (f64, usize) {
        let dim = self.cfg.dim;
        let (mut loss, mut pairs) = (0.0, 0);
        let mut grad = vec![0.0f32; dim];
        let mut h = vec![0.0f32; dim];
        for s in sentences {
            for (i, &center) in s.iter().enumerate() {
                let b = rng.random_range(1..=self.cfg.window);
                let ctx: Vec<usize> = (i.saturating_sub(b)..(i + b + 1).min(s.len()))
                    .filter(|&j| j != i)
                    .map(|j| s[j])
                    .collect();
                self.step += 1.0;
                if ctx.is_empty() {
                    continue;
                }
                h.fill(0.0);
                for &c in &ctx {
                    for (hv, &x) in h.iter_mut().zip(&self.input[c * dim..(c + 1) * dim]) {
                        *hv += x;
                    }
                }
                let inv = 1.0 / ctx.len() as f32;
                h.iter_mut().for_each(|v| *v *= inv);
                grad.fill(0.0);
                loss += self.update(&h.clone(), center, &mut grad, rng);
                pairs += 1;
                for &c in &ctx {
                    for (v, g) in self.input[c * dim..(c + 1) * dim].iter_mut().zip(&grad) {
                        *v += g;
                    }
                }
            }
        }
        (loss, pairs)
    }
}

/// Negative-sampling word2vec over id sequences (no `<sos>`/`<eos>`).
/// Noise words are drawn from the unigram distribution raised to 0.75, so
/// ids that never occur in `sentences` (such as the reserved ids) are never
/// updated.
pub fn train_word2vec<R: Rng + ?Sized>(
    sentences: &[Vec<usize>],
    vocab_size: usize,
    cfg: &Word2VecConfig,
    rng: &mut R,
) -> Result<Word2VecOutput> {
    cfg.validate()?;
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    if total_tokens < cfg.window {
        return Err(Error::Input(format!(
            "word2vec corpus has {total_tokens} tokens, fewer than the window {}",
            cfg.window
        )));
    }
    let mut counts = vec![0.0f64; vocab_size];
    for &id in sentences.iter().flatten() {
        if id >= vocab_size {
            return Err(Error::Input(format!("token id {id} outside vocabulary of {vocab_size}")));
        }
        counts[id] += 1.0;
    }
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75)))
        .map_err(|e| Error::Input(format!("word2vec noise distribution: {e}")))?;

    let dim = cfg.dim;
    let bound = 0.5 / dim as f32;
    let init: Vec<f32> = (0..vocab_size * dim)
        .map(|_| rng.random_range(-bound..bound))
        .collect();

    let modes: &[Word2VecMode] = match cfg.mode {
        Word2VecMode::Both => &[Word2VecMode::Cbow, Word2VecMode::SkipGram],
        Word2VecMode::Cbow => &[Word2VecMode::Cbow],
        Word2VecMode::SkipGram => &[Word2VecMode::SkipGram],
    };
    let mut results = Vec::with_capacity(modes.len());
    let mut losses = vec![0.0; cfg.epochs];
    for &mode in modes {
        let mut t = Trainer {
            cfg,
            input: init.clone(),
            output: vec![0.0; vocab_size * dim],
            noise: &noise,
            total_steps: (cfg.epochs * total_tokens) as f64,
            step: 0.0,
        };
        for loss in losses.iter_mut() {
            let (l, n) = match mode {
                Word2VecMode::SkipGram => t.skip_gram_epoch(sentences, rng),
                _ => t.cbow_epoch(sentences, rng),
            };
            *loss += l / n.max(1) as f64 / modes.len() as f64;
        }
        results.push(t.input);
    }
    let data = if results.len() == 1 {
        results.pop().unwrap()
    } else {
        results[0]
            .iter()
            .zip(&results[1])
            .map(|(a, b)| (a + b) * 0.5)
            .collect()
    };
    Ok(Word2VecOutput {
        embeddings: EmbeddingMatrix {
            rows: vocab_size,
            dim,
            data,
        },
        epoch_losses: losses,
    })
}

const EMB_MAGIC: &[u8; 4] = b"CL4E";

/// `"CL4E"`, rows (u32 LE), dim (u32 LE), then f32 LE values.
pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + m.data.len() * 4);
    bytes.extend_from_slice(EMB_MAGIC);
    bytes.extend_from_slice(&(m.rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for v in &m.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |offset: usize, reason: &str| Error::Corruption {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[..4] != EMB_MAGIC {
        return Err(corrupt(0, "missing CL4E header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let want = 12 + rows * dim * 4;
    if bytes.len() != want {
        return Err(corrupt(bytes.len().min(want), "payload length does not match header"));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EmbeddingMatrix { rows, dim, data })
}
