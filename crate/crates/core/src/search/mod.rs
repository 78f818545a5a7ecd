//! Caption decoding: greedy, length-normalized beam search, and
//! comparison-based beam search (CBBS), which re-ranks beam candidates by
//! their agreement with captions of visually similar archive images.

mod archive;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use archive::{
    build_archive, build_archive_from_examples, cosine_similarity, decode_archive, encode_archive, knn_retrieve,
    load_archive, save_archive, Archive, ArchiveEntry, ARCHIVE_MAGIC,
};

use crate::captioner::{CaptionModel, DecodeState, ImageContext};
use crate::corpus::{TokenId, END, START};
use crate::error::{Error, Result};
use crate::metrics::{bleu_sentence_smoothed, CiderScorer, CIDER_SIGMA};

/// Anything that yields a next-token distribution from the previous token
/// and a recurrent state.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn start_state(&self) -> Self::State;
    fn next(&self, prev: TokenId, state: &Self::State) -> Result<(Vec<f64>, Self::State)>;
}

/// A caption model bound to one image context.
pub struct Conditioned<'a> {
    pub model: &'a CaptionModel,
    pub ctx: &'a ImageContext,
}

impl StepModel for Conditioned<'_> {
    type State = DecodeState;

    fn vocab_size(&self) -> usize {
        self.model.vocab_size()
    }

    fn start_state(&self) -> DecodeState {
        self.model.initial_state()
    }

    fn next(&self, prev: TokenId, state: &DecodeState) -> Result<(Vec<f64>, DecodeState)> {
        self.model.step(self.ctx, prev, state)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, without `<start>`; ends with `<end>` when the
    /// model stopped on its own.
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// `log_prob / len^alpha`, where `len` counts `<end>`.
    pub fn score(&self, alpha: f64) -> f64 {
        let len = self.tokens.len().max(1) as f64;
        self.log_prob / len.powf(alpha)
    }

    /// Tokens with a trailing `<end>` removed.
    pub fn words(&self) -> &[TokenId] {
        match self.tokens.last() {
            Some(&END) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Descending score, then lexicographically smaller tokens first.
fn rank(a: &Hypothesis, b: &Hypothesis, alpha: f64) -> Ordering {
    b.score(alpha)
        .total_cmp(&a.score(alpha))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn ln(p: f64) -> f64 {
    p.max(crate::nncore::LOG_FLOOR).ln()
}

/// Takes the most probable token at every step (lowest index on ties) until
/// `<end>` or `max_len` tokens.
pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<Hypothesis> {
    let mut state = model.start_state();
    let mut prev = START;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    while hyp.tokens.len() < max_len {
        let (probs, next) = model.next(prev, &state)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        hyp.tokens.push(best);
        hyp.log_prob += ln(probs[best]);
        state = next;
        prev = best;
        if best == END {
            break;
        }
    }
    hyp.finished = true;
    Ok(hyp)
}

/// Beam search over the full vocabulary. The beam holds the best `width`
/// hypotheses among fresh expansions and already finished ones; finished
/// hypotheses are frozen. Returns up to `width` finished hypotheses, best first.
pub fn beam_search<M: StepModel>(model: &M, width: usize, max_len: usize, alpha: f64) -> Result<Vec<Hypothesis>> {
    if width == 0 {
        return Err(Error::Param("beam width must be >= 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Param("max_len must be >= 1".into()));
    }
    let v = model.vocab_size();
    let mut live: Vec<(Hypothesis, M::State)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        model.start_state(),
    )];
    let mut done: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() {
        let mut pool: Vec<(Hypothesis, Option<usize>)> = done.drain(..).map(|h| (h, None)).collect();
        let mut states = Vec::with_capacity(live.len());
        for (h, state) in &live {
            let prev = h.tokens.last().copied().unwrap_or(START);
            let (probs, next) = model.next(prev, state)?;
            if probs.len() != v {
                return Err(Error::Shape(format!("model returned {} probabilities for vocab {v}", probs.len())));
            }
            for (w, &p) in probs.iter().enumerate() {
                let mut tokens = h.tokens.clone();
                tokens.push(w);
                let finished = w == END || tokens.len() >= max_len;
                pool.push((
                    Hypothesis {
                        tokens,
                        log_prob: h.log_prob + ln(p),
                        finished,
                    },
                    Some(states.len()),
                ));
            }
            states.push(next);
        }
        pool.sort_by(|a, b| rank(&a.0, &b.0, alpha));
        pool.truncate(width);
        live = Vec::new();
        for (h, origin) in pool {
            if h.finished {
                done.push(h);
            } else {
                let s = states[origin.expect("live hypotheses come from expansion")].clone();
                live.push((h, s));
            }
        }
    }
    done.sort_by(|a, b| rank(a, b, alpha));
    Ok(done)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusMetric {
    /// Mean smoothed sentence BLEU-2 against each reference.
    Bleu2,
    /// CIDEr-D with document frequencies from the archive captions.
    Cider,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbbsConfig {
    pub beam_width: usize,
    pub k: usize,
    pub alpha: f64,
    pub metric: ConsensusMetric,
}

impl Default for CbbsConfig {
    fn default() -> Self {
        CbbsConfig {
            beam_width: 5,
            k: 5,
            alpha: 0.7,
            metric: ConsensusMetric::Bleu2,
        }
    }
}

impl CbbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Mean smoothed sentence BLEU-2 of `candidate` against each reference.
pub fn consensus_score(candidate: &[TokenId], references: &[Vec<TokenId>]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Param("consensus needs at least one reference".into()));
    }
    let mut sum = 0.0;
    for r in references {
        sum += bleu_sentence_smoothed(candidate, std::slice::from_ref(r), 2)?;
    }
    Ok(sum / references.len() as f64)
}

/// Runs beam search, then returns the candidate that agrees best with the
/// captions of the `k` nearest archive entries. With `k = 0` or an empty
/// archive this is the top beam hypothesis.
pub fn cbbs_decode<M: StepModel>(
    model: &M,
    feature: &[f64],
    archive: &Archive,
    cfg: &CbbsConfig,
    max_len: usize,
) -> Result<Hypothesis> {
    cfg.validate()?;
    let cands = beam_search(model, cfg.beam_width, max_len, cfg.alpha)?;
    if cfg.k == 0 || archive.entries.is_empty() {
        return cands
            .into_iter()
            .next()
            .ok_or_else(|| Error::Data("beam search produced no hypotheses".into()));
    }
    let k = cfg.k.min(archive.entries.len());
    let refs: Vec<Vec<TokenId>> = knn_retrieve(archive, feature, k)?
        .into_iter()
        .flat_map(|(i, _)| archive.entries[i].captions.iter().cloned())
        .collect();
    let scorer = match cfg.metric {
        ConsensusMetric::Bleu2 => None,
        ConsensusMetric::Cider => Some(archive.cider_scorer()?),
    };
    let mut best: Option<(f64, Hypothesis)> = None;
    for h in cands {
        let s = match &scorer {
            None => consensus_score(h.words(), &refs)?,
            Some(sc) => sc.score(h.words(), &refs),
        };
        let better = match &best {
            None => true,
            Some((bs, bh)) => match s.total_cmp(bs) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => rank(&h, bh, cfg.alpha) == Ordering::Less,
            },
        };
        if better {
            best = Some((s, h));
        }
    }
    best.map(|(_, h)| h)
        .ok_or_else(|| Error::Data("beam search produced no hypotheses".into()))
}

/// How to turn a model and an image into a caption.
#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    Greedy,
    Beam { width: usize, alpha: f64 },
    Cbbs(CbbsConfig),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Beam { .. } => "beam",
            Strategy::Cbbs(_) => "cbbs",
        }
    }
}

/// Decodes one image with `strategy`. `archive` is required for CBBS.
pub fn decode_caption(
    model: &CaptionModel,
    ctx: &ImageContext,
    strategy: &Strategy,
    archive: Option<&Archive>,
) -> Result<Hypothesis> {
    let max_len = model.config().max_caption_len + 1;
    let bound = Conditioned { model, ctx };
    match strategy {
        Strategy::Greedy => greedy_decode(&bound, max_len),
        Strategy::Beam { width, alpha } => beam_search(&bound, *width, max_len, *alpha)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Data("beam search produced no hypotheses".into())),
        Strategy::Cbbs(cfg) => {
            let archive = archive.ok_or_else(|| Error::Param("cbbs decoding needs an archive".into()))?;
            cbbs_decode(&bound, &ctx.feature(), archive, cfg, max_len)
        }
    }
}

impl Archive {
    /// CIDEr-D scorer whose document frequencies come from the archive entries.
    pub fn cider_scorer(&self) -> Result<CiderScorer<TokenId>> {
        let sets: Vec<Vec<Vec<TokenId>>> = self.entries.iter().map(|e| e.captions.clone()).collect();
        CiderScorer::new(&sets, 4, CIDER_SIGMA)
    }
}
