use super::check_corpus;
use crate::error::Result;

pub const ROUGE_BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure against the best-matching reference.
pub fn rouge_l_sentence<T: PartialEq>(cand: &[T], refs: &[Vec<T>], beta: f64) -> f64 {
    let mut best = 0.0f64;
    for r in refs {
        let lcs = lcs_len(cand, r);
        if lcs == 0 {
            continue;
        }
        let p = lcs as f64 / cand.len() as f64;
        let rec = lcs as f64 / r.len() as f64;
        let b2 = beta * beta;
        let f = (1.0 + b2) * p * rec / (rec + b2 * p);
        best = best.max(f);
    }
    best
}

/// Mean sentence ROUGE-L over the corpus.
pub fn rouge_l<T: PartialEq>(cands: &[Vec<T>], refs: &[Vec<Vec<T>>], beta: f64) -> Result<f64> {
    check_corpus(cands, refs)?;
    let sum: f64 = cands
        .iter()
        .zip(refs)
        .map(|(c, r)| rouge_l_sentence(c, r, beta))
        .sum();
    Ok(sum / cands.len() as f64)
}
