use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{ngram_counts, EvalCorpus};

/// Corpus BLEU-`n`: clipped precisions of orders `1..=n` pooled over the
/// corpus, uniform geometric mean, times the brevity penalty. Unsmoothed, so
/// any order without a match gives 0.
pub fn bleu(corpus: &EvalCorpus, n: usize) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(Error::Input(format!("BLEU order must be 1..=4, got {n}")));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    for item in corpus.items() {
        for k in 1..=n {
            let cand = ngram_counts(&item.candidate, k);
            let mut ceiling: HashMap<&[String], usize> = HashMap::new();
            for r in &item.references {
                for (g, c) in ngram_counts(r, k) {
                    let e = ceiling.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in cand {
                total[k - 1] += c;
                matched[k - 1] += c.min(ceiling.get(g).copied().unwrap_or(0));
            }
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n as f64;
    Ok(brevity_penalty(corpus) * log_p.exp())
}

/// `exp(1 − r/c)` when the total candidate length `c` is below the summed
/// closest-reference length `r`, else 1. Ties between references go to the
/// shorter one.
pub fn brevity_penalty(corpus: &EvalCorpus) -> f64 {
    let (mut c, mut r) = (0usize, 0usize);
    for item in corpus.items() {
        let len = item.candidate.len();
        c += len;
        r += item
            .references
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(len), l))
            .unwrap_or(0);
    }
    if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    }
}
