//! Caption models: a single-stream baseline, early fusion (position-wise
//! concatenation of the original and edge-aware encodings before L1) and
//! late fusion (two full decoder streams joined before the shared L3).
//!
//! Every variant decodes the same way. The image context `ctx = L1(...)` is
//! concatenated with the LSTM output at every step and fed through the
//! linear stack: `probs = softmax(L3(L2(ctx ⊕ h')))`. The late variant runs
//! `L2(ctx_i ⊕ h'_i)` per stream and feeds the concatenation of both to L3.

mod checkpoint;
mod train;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use train::{
    evaluate_teacher_forced, prepare_examples, train, train_with, BatchStats, EpochStats, Example, TrainingLog,
};

use crate::corpus::{TokenId, Vocab, SPECIALS};
use crate::encoder::{concat, deinterleave, positionwise_concat, ConvEncoderParams, EncoderShape, FeatureVec};
use crate::error::{Error, Result};
use crate::imagecore::{edge_aware_image, resize_bilinear, EdgeDetector, Image};
use crate::nncore::{
    prefixed, prefixed_mut, seeded_rng, softmax_in_place, EmbeddingParams, LinearParams, LstmParams,
    ParamSet, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Single,
    Early,
    Late,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Single, Variant::Early, Variant::Late];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Single => "single",
            Variant::Early => "early",
            Variant::Late => "late",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which image feeds the structural stream. `None` means no edge stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    None,
    Canny,
    Sobel,
    Laplacian,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [EdgeKind::None, EdgeKind::Canny, EdgeKind::Sobel, EdgeKind::Laplacian];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::None => "none",
            EdgeKind::Canny => "canny",
            EdgeKind::Sobel => "sobel",
            EdgeKind::Laplacian => "laplacian",
        }
    }

    pub fn parse(s: &str) -> Option<EdgeKind> {
        EdgeKind::ALL.into_iter().find(|v| v.as_str() == s)
    }

    pub fn detector(self) -> Option<EdgeDetector> {
        match self {
            EdgeKind::None => None,
            EdgeKind::Canny => Some(EdgeDetector::canny_default()),
            EdgeKind::Sobel => Some(EdgeDetector::Sobel),
            EdgeKind::Laplacian => Some(EdgeDetector::Laplacian),
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Images per optimizer step; every selected caption of each image joins the batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Use only the first `k` captions of each image.
    pub captions_per_image: Option<usize>,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    /// Stop after the first epoch whose running token accuracy reaches this.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            captions_per_image: None,
            max_steps: None,
            stop_at_accuracy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub edge: EdgeKind,
    pub encoder: EncoderShape,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub l1_out: usize,
    pub l2_out: usize,
    /// Longest caption in words, excluding the start and end markers.
    pub max_caption_len: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Early,
            edge: EdgeKind::Laplacian,
            encoder: EncoderShape::default(),
            embed_dim: 256,
            hidden_dim: 256,
            l1_out: 256,
            l2_out: 256,
            max_caption_len: 20,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("encoder.input_size", self.encoder.input_size),
            ("encoder.channels[0]", self.encoder.channels[0]),
            ("encoder.channels[1]", self.encoder.channels[1]),
            ("encoder.channels[2]", self.encoder.channels[2]),
            ("encoder.feature_dim", self.encoder.feature_dim),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("l1_out", self.l1_out),
            ("l2_out", self.l2_out),
            ("max_caption_len", self.max_caption_len),
            ("train.batch_size", self.train.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.train.learning_rate >= 0.0) || !self.train.learning_rate.is_finite() {
            return Err(Error::Config("train.learning_rate must be finite and >= 0".into()));
        }
        if self.train.captions_per_image == Some(0) {
            return Err(Error::Config("train.captions_per_image must be positive".into()));
        }
        Ok(())
    }

    /// Row label such as `laplacian/early` or `original/single`.
    pub fn label(&self) -> String {
        let image = match self.edge {
            EdgeKind::None => "original",
            e => e.as_str(),
        };
        format!("{image}/{}", self.variant)
    }

    pub fn encoder_count(&self) -> usize {
        match self.variant {
            Variant::Single => 1,
            Variant::Early | Variant::Late => 2,
        }
    }

    pub fn decoder_count(&self) -> usize {
        match self.variant {
            Variant::Single | Variant::Early => 1,
            Variant::Late => 2,
        }
    }

    fn l1_in(&self) -> usize {
        match self.variant {
            Variant::Early => 2 * self.encoder.feature_dim,
            Variant::Single | Variant::Late => self.encoder.feature_dim,
        }
    }
}

/// One decoder stream: L1, embedding X, LSTM D and L2.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub l1: LinearParams,
    pub embed: EmbeddingParams,
    pub lstm: LstmParams,
    pub l2: LinearParams,
}

impl ParamSet for DecoderParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<_> = prefixed("l1", self.l1.tensors()).collect();
        out.extend(prefixed("embed", self.embed.tensors()));
        out.extend(prefixed("lstm", self.lstm.tensors()));
        out.extend(prefixed("l2", self.l2.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<_> = prefixed_mut("l1", self.l1.tensors_mut()).collect();
        out.extend(prefixed_mut("embed", self.embed.tensors_mut()));
        out.extend(prefixed_mut("lstm", self.lstm.tensors_mut()));
        out.extend(prefixed_mut("l2", self.l2.tensors_mut()));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptionParams {
    pub encoders: Vec<ConvEncoderParams>,
    pub decoders: Vec<DecoderParams>,
    pub l3: LinearParams,
}

impl CaptionParams {
    pub fn zeros(cfg: &ModelConfig, vocab_size: usize) -> Self {
        let decoder = || DecoderParams {
            l1: LinearParams::zeros(cfg.l1_in(), cfg.l1_out),
            embed: EmbeddingParams::zeros(vocab_size, cfg.embed_dim),
            lstm: LstmParams::zeros(cfg.embed_dim, cfg.hidden_dim),
            l2: LinearParams::zeros(cfg.l1_out + cfg.hidden_dim, cfg.l2_out),
        };
        CaptionParams {
            encoders: (0..cfg.encoder_count()).map(|_| ConvEncoderParams::zeros(&cfg.encoder)).collect(),
            decoders: (0..cfg.decoder_count()).map(|_| decoder()).collect(),
            l3: LinearParams::zeros(cfg.decoder_count() * cfg.l2_out, vocab_size),
        }
    }

    pub fn init(cfg: &ModelConfig, vocab_size: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let encoders = (0..cfg.encoder_count())
            .map(|_| ConvEncoderParams::init(&cfg.encoder, &mut rng))
            .collect();
        let decoders = (0..cfg.decoder_count())
            .map(|_| DecoderParams {
                l1: LinearParams::init(cfg.l1_in(), cfg.l1_out, &mut rng),
                embed: EmbeddingParams::init(vocab_size, cfg.embed_dim, &mut rng),
                lstm: LstmParams::init(cfg.embed_dim, cfg.hidden_dim, &mut rng),
                l2: LinearParams::init(cfg.l1_out + cfg.hidden_dim, cfg.l2_out, &mut rng),
            })
            .collect();
        let l3 = LinearParams::init(cfg.decoder_count() * cfg.l2_out, vocab_size, &mut rng);
        CaptionParams {
            encoders,
            decoders,
            l3,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero();
        g
    }
}

impl ParamSet for CaptionParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, e) in self.encoders.iter().enumerate() {
            out.extend(prefixed(&format!("enc{i}"), e.tensors()));
        }
        for (i, d) in self.decoders.iter().enumerate() {
            out.extend(prefixed(&format!("dec{i}"), d.tensors()));
        }
        out.extend(prefixed("l3", self.l3.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, e) in self.encoders.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("enc{i}"), e.tensors_mut()));
        }
        for (i, d) in self.decoders.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("dec{i}"), d.tensors_mut()));
        }
        out.extend(prefixed_mut("l3", self.l3.tensors_mut()));
        out
    }
}

/// Per-stream L1 outputs for one image, computed once and reused at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageContext {
    pub streams: Vec<FeatureVec>,
}

impl ImageContext {
    /// The retrieval feature: stream contexts joined end to end.
    pub fn feature(&self) -> FeatureVec {
        self.streams.iter().flatten().copied().collect()
    }
}

/// LSTM `(h, c)` per decoder stream.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptionModel {
    config: ModelConfig,
    vocab: Vocab,
    pub params: CaptionParams,
}

fn check_vocab(vocab: &Vocab) -> Result<()> {
    let ok = SPECIALS
        .iter()
        .enumerate()
        .all(|(i, s)| vocab.token(i) == Some(*s));
    if ok {
        Ok(())
    } else {
        Err(Error::Config("vocabulary is missing the special tokens".into()))
    }
}

impl CaptionModel {
    /// Builds a randomly initialized model; parameters depend only on
    /// `(cfg, vocab size, seed)`.
    pub fn build(cfg: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        cfg.validate()?;
        check_vocab(&vocab)?;
        let params = CaptionParams::init(&cfg, vocab.len(), seed);
        Ok(CaptionModel {
            config: cfg,
            vocab,
            params,
        })
    }

    /// All parameters zero.
    pub fn zeros(cfg: ModelConfig, vocab: Vocab) -> Result<Self> {
        cfg.validate()?;
        check_vocab(&vocab)?;
        let params = CaptionParams::zeros(&cfg, vocab.len());
        Ok(CaptionModel {
            config: cfg,
            vocab,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Resizes to the encoder input and derives the stream images: the
    /// original and/or its edge-aware companion, in encoder order.
    pub fn stream_images(&self, img: &Image) -> Result<Vec<Image>> {
        let n = self.config.encoder.input_size;
        let mut base = if img.width() == n && img.height() == n {
            img.clone()
        } else {
            resize_bilinear(img, n, n)?
        };
        if base.channels() == 1 {
            let data = base.data().iter().flat_map(|&v| [v; 3]).collect();
            base = Image::new(n, n, 3, data)?;
        }
        let edge = match self.config.edge.detector() {
            Some(d) => Some(edge_aware_image(&base, &d)?),
            None => None,
        };
        Ok(match (self.config.variant, edge) {
            (Variant::Single, None) => vec![base],
            (Variant::Single, Some(e)) => vec![e],
            (_, Some(e)) => vec![base, e],
            // no edge detector: both encoders see the original
            (_, None) => vec![base.clone(), base],
        })
    }

    /// Maps per-encoder features to per-decoder L1 inputs.
    pub(crate) fn l1_inputs(&self, feats: &[FeatureVec]) -> Result<Vec<FeatureVec>> {
        Ok(match self.config.variant {
            Variant::Single | Variant::Late => feats.to_vec(),
            Variant::Early => vec![positionwise_concat(&feats[0], &feats[1])?],
        })
    }

    /// Inverse routing of [`Self::l1_inputs`] for gradients.
    pub(crate) fn l1_input_grads(&self, grads: Vec<FeatureVec>) -> Vec<FeatureVec> {
        match self.config.variant {
            Variant::Single | Variant::Late => grads,
            Variant::Early => {
                let (p, q) = deinterleave(&grads[0]);
                vec![p, q]
            }
        }
    }

    pub fn encode_streams(&self, streams: &[Image]) -> Result<ImageContext> {
        if streams.len() != self.params.encoders.len() {
            return Err(Error::Shape(format!(
                "{} stream images for {} encoders",
                streams.len(),
                self.params.encoders.len()
            )));
        }
        let feats = self
            .params
            .encoders
            .iter()
            .zip(streams)
            .map(|(e, img)| e.forward(img))
            .collect::<Result<Vec<_>>>()?;
        let inputs = self.l1_inputs(&feats)?;
        let streams = self
            .params
            .decoders
            .iter()
            .zip(&inputs)
            .map(|(d, x)| d.l1.forward(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(ImageContext { streams })
    }

    pub fn encode_image(&self, img: &Image) -> Result<ImageContext> {
        self.encode_streams(&self.stream_images(img)?)
    }

    pub fn initial_state(&self) -> DecodeState {
        let h = self.config.hidden_dim;
        let n = self.params.decoders.len();
        DecodeState {
            h: vec![vec![0.0; h]; n],
            c: vec![vec![0.0; h]; n],
        }
    }

    /// One decoding step: next-token distribution and the updated state.
    pub fn step(&self, ctx: &ImageContext, prev: TokenId, state: &DecodeState) -> Result<(Vec<f64>, DecodeState)> {
        let n = self.params.decoders.len();
        if ctx.streams.len() != n || state.h.len() != n || state.c.len() != n {
            return Err(Error::Shape(format!(
                "context/state carry {}/{} streams, model has {n}",
                ctx.streams.len(),
                state.h.len()
            )));
        }
        let mut joined = Vec::with_capacity(n * self.config.l2_out);
        let mut next = DecodeState {
            h: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
        };
        for (i, d) in self.params.decoders.iter().enumerate() {
            let x = d.embed.lookup(prev)?;
            let (h, c, _) = d.lstm.step(x, &state.h[i], &state.c[i])?;
            let z = d.l2.forward(&concat(&ctx.streams[i], &h))?;
            joined.extend(z);
            next.h.push(h);
            next.c.push(c);
        }
        let mut probs = self.params.l3.forward(&joined)?;
        softmax_in_place(&mut probs);
        Ok((probs, next))
    }

    pub(crate) fn from_parts(config: ModelConfig, vocab: Vocab, params: CaptionParams) -> Self {
        CaptionModel {
            config,
            vocab,
            params,
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy_vocab(n: usize) -> Vocab {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend((0..n - SPECIALS.len()).map(|i| format!("w{i}")));
        Vocab::from_tokens(tokens).unwrap()
    }

    pub(crate) fn toy_config(variant: Variant) -> ModelConfig {
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

    pub(crate) fn toy_image(seed: u64) -> Image {
        use rand::Rng as _;
        let mut rng = seeded_rng(seed);
        let data = (0..8 * 8 * 3).map(|_| rng.random_range(0.0..1.0)).collect();
        Image::new(8, 8, 3, data).unwrap()
    }

    #[test]
    fn dimensions_follow_config() {
        let cfg = ModelConfig::default();
        let m = CaptionModel::build(cfg.clone(), toy_vocab(30), 0).unwrap();
        assert_eq!(m.params.decoders[0].l2.in_dim(), 512);
        assert_eq!(m.params.decoders[0].l1.in_dim(), 256);
        assert_eq!(m.params.l3.out_dim(), 30);
        let single = CaptionModel::build(
            ModelConfig {
                variant: Variant::Single,
                ..cfg.clone()
            },
            toy_vocab(30),
            0,
        )
        .unwrap();
        assert!(m.params.param_count() > single.params.param_count());
        let late = CaptionModel::build(
            ModelConfig {
                variant: Variant::Late,
                ..cfg
            },
            toy_vocab(30),
            0,
        )
        .unwrap();
        assert_eq!(late.params.l3.in_dim(), 512);
    }

    #[test]
    fn invalid_configs() {
        let cfg = ModelConfig {
            hidden_dim: 0,
            ..ModelConfig::default()
        };
        assert!(CaptionModel::build(cfg, toy_vocab(10), 0).is_err());
        let bad_vocab = Vocab::from_tokens(SPECIALS.iter().map(|s| s.to_string()).collect()).unwrap();
        assert!(CaptionModel::build(toy_config(Variant::Single), bad_vocab, 0).is_ok());
    }

    #[test]
    fn same_seed_same_params() {
        let a = CaptionModel::build(toy_config(Variant::Early), toy_vocab(12), 9).unwrap();
        let b = CaptionModel::build(toy_config(Variant::Early), toy_vocab(12), 9).unwrap();
        assert_eq!(a.params, b.params);
        let c = CaptionModel::build(toy_config(Variant::Early), toy_vocab(12), 10).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn zero_model_is_uniform() {
        for v in Variant::ALL {
            let m = CaptionModel::zeros(toy_config(v), toy_vocab(12)).unwrap();
            let ctx = m.encode_image(&toy_image(0)).unwrap();
            assert!(ctx.streams.iter().flatten().all(|x| *x == 0.0));
            let (p, _) = m.step(&ctx, crate::corpus::START, &m.initial_state()).unwrap();
            assert!(p.iter().all(|x| (x - 1.0 / 12.0).abs() < 1e-15));
        }
    }

    #[test]
    fn step_emits_distribution() {
        for v in Variant::ALL {
            let m = CaptionModel::build(toy_config(v), toy_vocab(12), 4).unwrap();
            let ctx = m.encode_image(&toy_image(1)).unwrap();
            let mut state = m.initial_state();
            let mut prev = crate::corpus::START;
            for t in 0..6 {
                let (p, s) = m.step(&ctx, prev, &state).unwrap();
                let (p2, _) = m.step(&ctx, prev, &state).unwrap();
                assert_eq!(p, p2);
                assert!(p.iter().all(|x| *x > 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                state = s;
                prev = 4 + t;
            }
            assert!(m.step(&ctx, 99, &state).is_err());
        }
    }

    #[test]
    fn stream_routing() {
        let img = Image::filled(8, 8, 3, 0.4).unwrap();
        let early = CaptionModel::zeros(toy_config(Variant::Early), toy_vocab(12)).unwrap();
        let s = early.stream_images(&img).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], img);
        assert!(s[1].data().iter().all(|v| *v == 0.0));
        let mut cfg = toy_config(Variant::Single);
        cfg.edge = EdgeKind::None;
        let single = CaptionModel::zeros(cfg, toy_vocab(12)).unwrap();
        assert_eq!(single.stream_images(&img).unwrap(), vec![img.clone()]);
        let big = Image::filled(20, 16, 1, 0.2).unwrap();
        let s = single.stream_images(&big).unwrap();
        assert_eq!((s[0].width(), s[0].channels()), (8, 3));
        let mut cfg = toy_config(Variant::Late);
        cfg.edge = EdgeKind::None;
        let late = CaptionModel::zeros(cfg, toy_vocab(12)).unwrap();
        assert_eq!(late.stream_images(&img).unwrap(), vec![img.clone(), img]);
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"variant":"late","edge":"sobel"}"#).unwrap();
        assert_eq!(cfg.variant, Variant::Late);
        assert_eq!(cfg.hidden_dim, 256);
        assert_eq!(cfg.label(), "sobel/late");
        assert!(serde_json::from_str::<ModelConfig>(r#"{"bogus":1}"#).is_err());
    }
}
