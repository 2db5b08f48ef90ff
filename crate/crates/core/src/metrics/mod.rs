//! Corpus-level caption metrics: BLEU-1..4, ROUGE-L and CIDEr-D.

mod bleu;
mod cider;
mod report;
mod rouge;

pub use bleu::{bleu, brevity_penalty};
pub use cider::{cider_d, CIDER_SIGMA};
pub use report::{evaluate_all, read_report_csv, read_report_json, MetricReport};
pub use rouge::{lcs_len, rouge_l, ROUGE_BETA};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text::{normalize_caption, tokenize};

/// A candidate caption with its references, as word lists.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalItem {
    /// Normalizes and tokenizes raw caption text.
    pub fn from_text<S: AsRef<str>>(candidate: &str, references: &[S]) -> Self {
        let words = |s: &str| -> Vec<String> {
            tokenize(&normalize_caption(s)).into_iter().map(str::to_string).collect()
        };
        EvalItem {
            candidate: words(candidate),
            references: references.iter().map(|r| words(r.as_ref())).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCorpus {
    items: Vec<EvalItem>,
}

impl EvalCorpus {
    pub fn new(items: Vec<EvalItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Input("evaluation corpus is empty".into()));
        }
        if let Some(i) = items.iter().position(|it| it.references.is_empty()) {
            return Err(Error::Input(format!("item {i} has no reference captions")));
        }
        Ok(EvalCorpus { items })
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Occurrence counts of every `n`-gram in `words`.
pub(crate) fn ngram_counts(words: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && words.len() >= n {
        for g in words.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}
