use std::collections::BTreeMap;

use super::{check_corpus, ngram_counts};
use crate::error::{Error, Result};

pub const CIDER_SIGMA: f64 = 6.0;

type Vector<T> = BTreeMap<Vec<T>, f64>;

/// CIDEr-D with document frequencies taken from a fixed collection of
/// reference sets (one set per image).
#[derive(Clone, Debug)]
pub struct CiderScorer<T: Ord> {
    max_n: usize,
    sigma: f64,
    log_docs: f64,
    df: BTreeMap<Vec<T>, usize>,
}

impl<T: Ord + Clone> CiderScorer<T> {
    pub fn new(ref_sets: &[Vec<Vec<T>>], max_n: usize, sigma: f64) -> Result<Self> {
        if ref_sets.is_empty() {
            return Err(Error::Param("CIDEr needs at least one reference set".into()));
        }
        if max_n == 0 || !(sigma > 0.0) {
            return Err(Error::Param(format!(
                "CIDEr needs n >= 1 and sigma > 0, got n={max_n} sigma={sigma}"
            )));
        }
        let mut df = BTreeMap::new();
        for set in ref_sets {
            let mut seen = std::collections::BTreeSet::new();
            for r in set {
                for n in 1..=max_n {
                    for gram in ngram_counts(r, n).into_keys() {
                        seen.insert(gram);
                    }
                }
            }
            for gram in seen {
                *df.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        Ok(CiderScorer {
            max_n,
            sigma,
            log_docs: (ref_sets.len() as f64).ln(),
            df,
        })
    }

    pub fn document_frequency(&self, gram: &[T]) -> usize {
        self.df.get(gram).copied().unwrap_or(0)
    }

    fn vectors(&self, tokens: &[T]) -> Vec<(Vector<T>, f64)> {
        (1..=self.max_n)
            .map(|n| {
                let mut vec = BTreeMap::new();
                let mut sq = 0.0;
                for (gram, tf) in ngram_counts(tokens, n) {
                    let df = self.document_frequency(gram).max(1) as f64;
                    let weight = tf as f64 * (self.log_docs - df.ln());
                    sq += weight * weight;
                    vec.insert(gram.to_vec(), weight);
                }
                (vec, sq.sqrt())
            })
            .collect()
    }

    /// Score of one candidate against its references, in `[0, 10]`.
    pub fn score(&self, cand: &[T], refs: &[Vec<T>]) -> f64 {
        if refs.is_empty() {
            return 0.0;
        }
        let cv = self.vectors(cand);
        let mut total = 0.0;
        for r in refs {
            let rv = self.vectors(r);
            let delta = cand.len() as f64 - r.len() as f64;
            let penalty = (-(delta * delta) / (2.0 * self.sigma * self.sigma)).exp();
            let mut per_n = 0.0;
            for ((cvec, cnorm), (rvec, rnorm)) in cv.iter().zip(&rv) {
                let mut dot = 0.0;
                for (gram, &cw) in cvec {
                    if let Some(&rw) = rvec.get(gram) {
                        dot += cw.min(rw) * rw;
                    }
                }
                if *cnorm != 0.0 && *rnorm != 0.0 {
                    dot /= cnorm * rnorm;
                } else {
                    dot = 0.0;
                }
                per_n += dot * penalty;
            }
            total += per_n / self.max_n as f64;
        }
        10.0 * total / refs.len() as f64
    }
}

/// Corpus CIDEr-D: document frequencies come from the reference sets
/// themselves, the result is the mean per-image score.
pub fn cider_d<T: Ord + Clone>(
    cands: &[Vec<T>],
    refs: &[Vec<Vec<T>>],
    max_n: usize,
    sigma: f64,
) -> Result<f64> {
    check_corpus(cands, refs)?;
    let scorer = CiderScorer::new(refs, max_n, sigma)?;
    let sum: f64 = cands.iter().zip(refs).map(|(c, r)| scorer.score(c, r)).sum();
    Ok(sum / cands.len() as f64)
}
