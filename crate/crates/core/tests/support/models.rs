//! Small step models with known structure for exercising the decoders.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rsic::captioner::{CaptionModel, EdgeKind, ModelConfig, TrainConfig, Variant};
use rsic::corpus::{TokenId, Vocab, SPECIALS};
use rsic::encoder::EncoderShape;
use rsic::imagecore::Image;
use rsic::search::StepModel;
use rsic::Result;

/// First-order Markov chain. `start` is the distribution of the first token;
/// `table[t]` the distribution after token `t`. The state is the last token,
/// so the start row does not alias any vocabulary entry.
pub struct Markov {
    pub start: Vec<f64>,
    pub table: Vec<Vec<f64>>,
}

impl StepModel for Markov {
    type State = Option<TokenId>;

    fn vocab_size(&self) -> usize {
        self.start.len()
    }

    fn start_state(&self) -> Option<TokenId> {
        None
    }

    fn next(&self, prev: TokenId, state: &Option<TokenId>) -> Result<(Vec<f64>, Option<TokenId>)> {
        let row = match state {
            None => &self.start,
            Some(_) => &self.table[prev],
        };
        Ok((row.clone(), Some(prev)))
    }
}

fn dist(rng: &mut Xoshiro256PlusPlus, v: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..v).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn random_markov(v: usize, seed: u64) -> Markov {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    Markov {
        start: dist(&mut rng, v),
        table: (0..v).map(|_| dist(&mut rng, v)).collect(),
    }
}

pub fn toy_vocab(n: usize) -> Vocab {
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend((0..n - SPECIALS.len()).map(|i| format!("w{i}")));
    Vocab::from_tokens(tokens).unwrap()
}

/// 8x8 input, tiny widths everywhere.
pub fn toy_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        edge: EdgeKind::Laplacian,
        encoder: EncoderShape {
            input_size: 8,
            channels: [2, 3, 3],
            feature_dim: 4,
        },
        embed_dim: 5,
        hidden_dim: 4,
        l1_out: 3,
        l2_out: 3,
        max_caption_len: 6,
        seed: 1,
        train: TrainConfig::default(),
    }
}

pub fn toy_model(variant: Variant, vocab: usize, seed: u64) -> CaptionModel {
    CaptionModel::build(toy_config(variant), toy_vocab(vocab), seed).unwrap()
}

pub fn random_image(size: usize, seed: u64) -> Image {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let data = (0..size * size * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    Image::new(size, size, 3, data).unwrap()
}
