use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

use super::{ngram_counts, EvalCorpus};

/// Width of the Gaussian length penalty.
pub const CIDER_SIGMA: f64 = 6.0;

type Vector<'a> = HashMap<&'a [String], f64>;

/// CIDEr-D with document frequencies taken over the reference sets.
pub fn cider_d(corpus: &EvalCorpus) -> Result<f64> {
    if corpus.len() < 2 {
        return Err(Error::Input("CIDEr-D needs at least two items for document frequencies".into()));
    }
    let log_docs = (corpus.len() as f64).ln();
    let mut total = 0.0;
    for n in 1..=4 {
        let mut df: HashMap<&[String], f64> = HashMap::new();
        for item in corpus.items() {
            let seen: HashSet<&[String]> = item.references.iter().flat_map(|r| ngram_counts(r, n).into_keys()).collect();
            for g in seen {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        for item in corpus.items() {
            let (hyp, hyp_norm) = tf_idf(&item.candidate, n, &df, log_docs);
            let mut item_sum = 0.0;
            for r in &item.references {
                let (refv, ref_norm) = tf_idf(r, n, &df, log_docs);
                let mut dot: f64 = hyp
                    .iter()
                    .map(|(g, &h)| refv.get(g).map_or(0.0, |&rv| h.min(rv) * rv))
                    .sum();
                if hyp_norm != 0.0 && ref_norm != 0.0 {
                    dot /= hyp_norm * ref_norm;
                }
                let delta = item.candidate.len() as f64 - r.len() as f64;
                item_sum += dot * (-delta * delta / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
            }
            total += item_sum / item.references.len() as f64;
        }
    }
    Ok(10.0 * total / (4.0 * corpus.len() as f64))
}

fn tf_idf<'a>(words: &'a [String], n: usize, df: &HashMap<&[String], f64>, log_docs: f64) -> (Vector<'a>, f64) {
    let v: Vector = ngram_counts(words, n)
        .into_iter()
        .map(|(g, tf)| (g, tf as f64 * (log_docs - df.get(g).copied().unwrap_or(0.0).max(1.0).ln())))
        .collect();
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    (v, norm)
}
