//! Straight transcriptions of the metric formulas over dense vectors and
//! position scans. Slow on purpose and shares nothing with the library.

fn count(gram: &[String], words: &[String]) -> usize {
    if gram.is_empty() || words.len() < gram.len() {
        return 0;
    }
    (0..=words.len() - gram.len()).filter(|&i| &words[i..i + gram.len()] == gram).count()
}

fn grams(words: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    if words.len() >= n {
        for i in 0..=words.len() - n {
            let g = words[i..i + n].to_vec();
            if !out.contains(&g) {
                out.push(g);
            }
        }
    }
    out
}

pub type Item = (Vec<String>, Vec<Vec<String>>);

pub fn bleu(items: &[Item], n: usize) -> f64 {
    let mut product = 1.0;
    for k in 1..=n {
        let (mut num, mut den) = (0.0, 0.0);
        for (cand, refs) in items {
            for g in grams(cand, k) {
                let c = count(&g, cand);
                let mut best = 0;
                for r in refs {
                    best = best.max(count(&g, r));
                }
                num += c.min(best) as f64;
                den += c as f64;
            }
        }
        if num == 0.0 {
            return 0.0;
        }
        product *= (num / den).powf(1.0 / n as f64);
    }
    let mut c = 0.0;
    let mut r = 0.0;
    for (cand, refs) in items {
        c += cand.len() as f64;
        let mut best = refs[0].len();
        for x in refs {
            let (d, bd) = ((x.len() as i64 - cand.len() as i64).abs(), (best as i64 - cand.len() as i64).abs());
            if d < bd || (d == bd && x.len() < best) {
                best = x.len();
            }
        }
        r += best as f64;
    }
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * product
}

fn lcs(a: &[String], b: &[String], memo: &mut Vec<Vec<Option<usize>>>) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    if let Some(v) = memo[a.len()][b.len()] {
        return v;
    }
    let v = if a[0] == b[0] {
        1 + lcs(&a[1..], &b[1..], memo)
    } else {
        lcs(&a[1..], b, memo).max(lcs(a, &b[1..], memo))
    };
    memo[a.len()][b.len()] = Some(v);
    v
}

pub fn rouge_l(items: &[Item]) -> f64 {
    let beta: f64 = 1.2;
    let mut sum = 0.0;
    for (cand, refs) in items {
        let mut best: f64 = 0.0;
        for r in refs {
            let mut memo = vec![vec![None; r.len() + 1]; cand.len() + 1];
            let l = lcs(cand, r, &mut memo) as f64;
            if l > 0.0 {
                let p = l / cand.len() as f64;
                let rc = l / r.len() as f64;
                best = best.max((1.0 + beta.powi(2)) * rc * p / (rc + beta.powi(2) * p));
            }
        }
        sum += best;
    }
    sum / items.len() as f64
}

pub fn cider_d(items: &[Item]) -> f64 {
    let docs = items.len() as f64;
    let sigma: f64 = 6.0;
    let mut per_item = vec![0.0; items.len()];
    for n in 1..=4 {
        let mut space: Vec<Vec<String>> = Vec::new();
        for (cand, refs) in items {
            for w in std::iter::once(cand).chain(refs.iter()) {
                for g in grams(w, n) {
                    if !space.contains(&g) {
                        space.push(g);
                    }
                }
            }
        }
        let idf: Vec<f64> = space
            .iter()
            .map(|g| {
                let df = items.iter().filter(|(_, refs)| refs.iter().any(|r| count(g, r) > 0)).count();
                docs.ln() - (df.max(1) as f64).ln()
            })
            .collect();
        let vec_of = |w: &[String]| -> Vec<f64> {
            space.iter().zip(&idf).map(|(g, i)| count(g, w) as f64 * i).collect()
        };
        for (k, (cand, refs)) in items.iter().enumerate() {
            let h = vec_of(cand);
            let hn = h.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut s = 0.0;
            for r in refs {
                let rv = vec_of(r);
                let rn = rv.iter().map(|x| x * x).sum::<f64>().sqrt();
                let mut dot = 0.0;
                for j in 0..space.len() {
                    dot += h[j].min(rv[j]) * rv[j];
                }
                let cos = if hn > 0.0 && rn > 0.0 { dot / (hn * rn) } else { 0.0 };
                let d = cand.len() as f64 - r.len() as f64;
                s += cos * (-(d * d) / (2.0 * sigma * sigma)).exp();
            }
            per_item[k] += s / refs.len() as f64 / 4.0;
        }
    }
    10.0 * per_item.iter().sum::<f64>() / docs
}
