//! Caption metrics: corpus BLEU-1..4, METEOR-lite, ROUGE-L and CIDEr-D.
//!
//! All scorers are generic over the token type so they work on both word
//! strings and vocabulary indices. Float accumulation always walks ordered
//! maps, which keeps results bit-identical across runs.
//!
//! METEOR here is exact-match only (no stemming, synonyms or paraphrases),
//! so its values are not comparable with the official METEOR tool.

mod bleu;
mod cider;
mod meteor;
mod rouge;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu_corpus, bleu_sentence_smoothed, SMOOTHING_EPS};
pub use cider::{cider_d, CiderScorer, CIDER_SIGMA};
pub use meteor::{meteor_lite, meteor_sentence};
pub use rouge::{lcs_len, rouge_l, rouge_l_sentence, ROUGE_BETA};

use crate::error::{Error, Result};

pub type TokenSeq = Vec<String>;

/// Lowercases, keeps alphanumerics and hyphens that sit between two
/// alphanumerics, and splits on whitespace.
pub fn tokenize(raw: &str) -> TokenSeq {
    let mut out = Vec::new();
    for chunk in raw.split_whitespace() {
        let chars: Vec<char> = chunk.chars().flat_map(char::to_lowercase).collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if c.is_alphanumeric() {
                word.push(c);
            } else if c == '-'
                && word.chars().last().is_some_and(char::is_alphanumeric)
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
            {
                word.push(c);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

pub(crate) fn ngram_counts<T: Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

pub(crate) fn check_corpus<T>(cands: &[Vec<T>], refs: &[Vec<Vec<T>>]) -> Result<()> {
    if cands.is_empty() {
        return Err(Error::Param("empty candidate corpus".into()));
    }
    if cands.len() != refs.len() {
        return Err(Error::Shape(format!(
            "{} candidates but {} reference sets",
            cands.len(),
            refs.len()
        )));
    }
    if let Some(i) = refs.iter().position(Vec::is_empty) {
        return Err(Error::Param(format!("reference set {i} is empty")));
    }
    Ok(())
}

/// Column headers, in table order.
pub const REPORT_COLUMNS: [&str; 7] = [
    "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "ROUGE-L", "CIDEr",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

impl EvalReport {
    /// Values in [`REPORT_COLUMNS`] order.
    pub fn values(&self) -> [f64; 7] {
        [
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.meteor,
            self.rouge_l,
            self.cider,
        ]
    }

    /// BLEU, METEOR and ROUGE-L in `[0, 1]`, CIDEr in `[0, 10]`.
    pub fn in_legal_range(&self) -> bool {
        let v = self.values();
        v[..6].iter().all(|x| (0.0..=1.0).contains(x)) && (0.0..=10.0).contains(&v[6])
    }

    pub fn to_csv(&self) -> String {
        let mut s = REPORT_COLUMNS.join(",");
        s.push('\n');
        s.push_str(&format_row(&self.values()));
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| {} |", REPORT_COLUMNS.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(REPORT_COLUMNS.len()));
        let cells: Vec<String> = self.values().iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "| {} |", cells.join(" | "));
        s
    }
}

pub(crate) fn format_row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Scores a candidate corpus against per-item reference sets with all seven metrics.
pub fn evaluate_all<T: Ord + Clone>(cands: &[Vec<T>], refs: &[Vec<Vec<T>>]) -> Result<EvalReport> {
    let bleu = bleu_corpus(cands, refs, 4)?;
    Ok(EvalReport {
        bleu1: bleu[0],
        bleu2: bleu[1],
        bleu3: bleu[2],
        bleu4: bleu[3],
        meteor: meteor_lite(cands, refs)?,
        rouge_l: rouge_l(cands, refs, ROUGE_BETA)?,
        cider: cider_d(cands, refs, 4, CIDER_SIGMA)?,
    })
}
