use super::check_corpus;
use crate::error::Result;

/// Exact-match METEOR against a single reference. Tokens are aligned greedily
/// left to right, each candidate token taking the first unused equal
/// reference token.
fn meteor_single<T: PartialEq>(cand: &[T], reference: &[T]) -> f64 {
    let mut used = vec![false; reference.len()];
    let mut aligned: Vec<Option<usize>> = Vec::with_capacity(cand.len());
    for tok in cand {
        let hit = (0..reference.len()).find(|&j| !used[j] && reference[j] == *tok);
        if let Some(j) = hit {
            used[j] = true;
        }
        aligned.push(hit);
    }
    let m = aligned.iter().flatten().count();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for a in &aligned {
        match (*a, prev) {
            (Some(j), Some(p)) if j == p + 1 => {}
            (Some(_), _) => chunks += 1,
            (None, _) => {}
        }
        prev = *a;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = p * r / (0.9 * p + 0.1 * r);
    let frag = chunks as f64 / m as f64;
    f * (1.0 - 0.5 * frag.powi(3))
}

/// Best single-reference score.
pub fn meteor_sentence<T: PartialEq>(cand: &[T], refs: &[Vec<T>]) -> f64 {
    refs.iter()
        .map(|r| meteor_single(cand, r))
        .fold(0.0, f64::max)
}

/// Mean sentence METEOR-lite over the corpus.
pub fn meteor_lite<T: PartialEq>(cands: &[Vec<T>], refs: &[Vec<Vec<T>>]) -> Result<f64> {
    check_corpus(cands, refs)?;
    let sum: f64 = cands
        .iter()
        .zip(refs)
        .map(|(c, r)| meteor_sentence(c, r))
        .sum();
    Ok(sum / cands.len() as f64)
}
