use super::EvalCorpus;

pub const ROUGE_BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean over items of the best LCS F-score against any reference.
pub fn rouge_l(corpus: &EvalCorpus) -> f64 {
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let total: f64 = corpus
        .items()
        .iter()
        .map(|item| {
            item.references
                .iter()
                .map(|r| {
                    let lcs = lcs_len(&item.candidate, r) as f64;
                    if lcs == 0.0 {
                        return 0.0;
                    }
                    let p = lcs / item.candidate.len() as f64;
                    let rec = lcs / r.len() as f64;
                    (1.0 + b2) * rec * p / (rec + b2 * p)
                })
                .fold(0.0, f64::max)
        })
        .sum();
    total / corpus.len() as f64
}
