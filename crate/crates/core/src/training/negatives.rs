use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

use super::{ClipData, TrainingExample};

/// Draws before falling back to enumerating every valid caption.
const REJECTION_TRIES: usize = 64;

/// One matched example per clip, its caption drawn uniformly from the clip's captions.
pub fn sample_positives<R: Rng + ?Sized>(clips: &[ClipData], rng: &mut R) -> Result<Vec<TrainingExample>> {
    clips
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.captions.is_empty() {
                return Err(Error::Input(format!("clip {} has no captions", c.name)));
            }
            let k = rng.random_range(0..c.captions.len());
            Ok(TrainingExample {
                mel: c.mel.clone(),
                tokens: c.captions[k].clone(),
                y: 0,
                clip_id: i,
            })
        })
        .collect()
}

/// Extends `base` with `⌊ratio·N⌋` mismatched examples and shuffles the
/// result. Each negative reuses a positive's spectrogram with a caption
/// drawn uniformly from the captions of other clips, never one that matches
/// any caption of its own clip.
pub fn make_negatives<R: Rng + ?Sized>(
    clips: &[ClipData],
    base: &[TrainingExample],
    ratio: f64,
    rng: &mut R,
) -> Result<Vec<TrainingExample>> {
    if !(ratio >= 0.0) {
        return Err(Error::Config(format!("negative ratio {ratio} is negative")));
    }
    let count = (ratio * base.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(base.to_vec());
    }
    let distinct: HashSet<usize> = base.iter().map(|e| e.clip_id).collect();
    if distinct.len() < 2 {
        return Err(Error::Input(
            "negatives need at least two distinct clips".into(),
        ));
    }
    if let Some(e) = base.iter().find(|e| e.clip_id >= clips.len()) {
        return Err(Error::Contract(format!("example refers to unknown clip {}", e.clip_id)));
    }
    let pool: Vec<(usize, usize)> = clips
        .iter()
        .enumerate()
        .flat_map(|(c, clip)| (0..clip.captions.len()).map(move |k| (c, k)))
        .collect();
    let own_sets: Vec<HashSet<&[usize]>> = clips
        .iter()
        .map(|c| c.captions.iter().map(|t| t.ids()).collect())
        .collect();
    let mut order: Vec<usize> = (0..base.len()).collect();
    order.shuffle(rng);
    let mut out = base.to_vec();
    for k in 0..count {
        let src = &base[order[k % base.len()]];
        let own = &own_sets[src.clip_id];
        let valid = |&(c, j): &(usize, usize)| c != src.clip_id && !own.contains(clips[c].captions[j].ids());
        let mut pick = None;
        for _ in 0..REJECTION_TRIES {
            let cand = pool[rng.random_range(0..pool.len())];
            if valid(&cand) {
                pick = Some(cand);
                break;
            }
        }
        let (c, j) = match pick {
            Some(p) => p,
            None => {
                let candidates: Vec<(usize, usize)> = pool.iter().copied().filter(valid).collect();
                if candidates.is_empty() {
                    return Err(Error::Input(format!(
                        "clip {} has no unpaired caption to draw from",
                        clips[src.clip_id].name
                    )));
                }
                candidates[rng.random_range(0..candidates.len())]
            }
        };
        let tokens = clips[c].captions[j].clone();
        out.push(TrainingExample {
            mel: src.mel.clone(),
            tokens,
            y: 1,
            clip_id: src.clip_id,
        });
    }
    out.shuffle(rng);
    Ok(out)
}
