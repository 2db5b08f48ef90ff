#![allow(dead_code)]

pub mod oracle;

use cl4ac::metrics::{EvalCorpus, EvalItem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A corpus of 2..=6 items over a five-word vocabulary, so n-grams repeat
/// and partial matches are common. Half the candidates are perturbed
/// references.
pub fn random_corpus(seed: u64) -> Vec<oracle::Item> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ["a", "dog", "barks", "rain", "loud"];
    let sentence = |rng: &mut ChaCha8Rng, min: usize| -> Vec<String> {
        let len = rng.random_range(min..=7);
        (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
    };
    let items = rng.random_range(2..=6);
    (0..items)
        .map(|_| {
            let refs: Vec<Vec<String>> = (0..rng.random_range(1..=5)).map(|_| sentence(&mut rng, 1)).collect();
            let cand = if rng.random_bool(0.5) {
                // a reference with one word swapped out
                let mut c = refs[rng.random_range(0..refs.len())].clone();
                let i = rng.random_range(0..c.len());
                c[i] = vocab[rng.random_range(0..vocab.len())].to_string();
                c
            } else {
                sentence(&mut rng, 0)
            };
            (cand, refs)
        })
        .collect()
}

pub fn to_corpus(items: &[oracle::Item]) -> EvalCorpus {
    EvalCorpus::new(
        items
            .iter()
            .map(|(c, r)| EvalItem {
                candidate: c.clone(),
                references: r.clone(),
            })
            .collect(),
    )
    .unwrap()
}
