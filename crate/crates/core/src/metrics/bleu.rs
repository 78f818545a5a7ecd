use super::{check_corpus, ngram_counts};
use crate::error::{Error, Result};

/// Numerator substituted for a zero clipped count in sentence-level BLEU.
pub const SMOOTHING_EPS: f64 = 0.1;

/// Clipped and total n-gram counts of one candidate against its references.
fn clipped_counts<T: Ord>(cand: &[T], refs: &[Vec<T>], n: usize) -> (usize, usize) {
    let cand_counts = ngram_counts(cand, n);
    let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
    let mut clipped = 0;
    for (gram, &count) in &cand_counts {
        let max_ref = ref_counts
            .iter()
            .map(|rc| rc.get(gram).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        clipped += count.min(max_ref);
    }
    (clipped, cand.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_len<T>(c: usize, refs: &[Vec<T>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Corpus BLEU-1..`max_n` with clipped counts pooled over the corpus and a
/// single brevity penalty. Any zero precision makes every higher-order score 0.
pub fn bleu_corpus<T: Ord>(cands: &[Vec<T>], refs: &[Vec<Vec<T>>], max_n: usize) -> Result<Vec<f64>> {
    check_corpus(cands, refs)?;
    if max_n == 0 {
        return Err(Error::Param("BLEU order must be >= 1".into()));
    }
    let mut clipped = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (cand, rs) in cands.iter().zip(refs) {
        c_len += cand.len();
        r_len += closest_ref_len(cand.len(), rs);
        for n in 1..=max_n {
            let (cl, to) = clipped_counts(cand, rs, n);
            clipped[n - 1] += cl;
            total[n - 1] += to;
        }
    }
    let bp = brevity_penalty(c_len, r_len);
    let mut scores = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut dead = false;
    for n in 0..max_n {
        if clipped[n] == 0 || total[n] == 0 {
            dead = true;
        }
        if dead {
            scores.push(0.0);
            continue;
        }
        log_sum += (clipped[n] as f64 / total[n] as f64).ln();
        scores.push(bp * (log_sum / (n + 1) as f64).exp());
    }
    Ok(scores)
}

/// Sentence-level BLEU-`n` where a zero clipped count is replaced by
/// [`SMOOTHING_EPS`]. Precision denominators are floored at 1; an empty
/// candidate scores 0.
pub fn bleu_sentence_smoothed<T: Ord>(cand: &[T], refs: &[Vec<T>], n: usize) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::Param("sentence BLEU needs at least one reference".into()));
    }
    if n == 0 {
        return Err(Error::Param("BLEU order must be >= 1".into()));
    }
    if cand.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (clipped, total) = clipped_counts(cand, refs, k);
        let num = if clipped == 0 { SMOOTHING_EPS } else { clipped as f64 };
        log_sum += (num / total.max(1) as f64).ln();
    }
    let bp = brevity_penalty(cand.len(), closest_ref_len(cand.len(), refs));
    Ok(bp * (log_sum / n as f64).exp())
}
