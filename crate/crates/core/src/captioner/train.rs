use rand::seq::SliceRandom;
use serde::Serialize;

use super::{CaptionModel, CaptionParams};
use crate::corpus::{Dataset, DatasetItem, TokenId, END, PAD, START};
use crate::encoder::EncoderCache;
use crate::error::{Error, Result};
use crate::imagecore::Image;
use crate::nncore::{seeded_rng, AdamState, LstmBatchCache, ParamSet};

/// One training image: its stream images and tokenized captions (word ids
/// only, without start/end markers).
#[derive(Clone, Debug)]
pub struct Example {
    pub streams: Vec<Image>,
    pub captions: Vec<Vec<TokenId>>,
}

/// Loads, resizes and edge-filters the images of `items` and encodes their
/// captions against the model's vocabulary.
pub fn prepare_examples(model: &CaptionModel, ds: &Dataset, items: &[&DatasetItem]) -> Result<Vec<Example>> {
    let max = model.config().max_caption_len;
    items
        .iter()
        .map(|item| {
            let img = ds.load_image(item)?;
            let captions = item
                .captions
                .iter()
                .map(|c| model.vocab().encode(c))
                .collect::<Vec<_>>();
            if let Some(c) = captions.iter().find(|c| c.len() > max) {
                return Err(Error::Data(format!(
                    "{}: caption has {} words, max_caption_len is {max}",
                    item.filename,
                    c.len()
                )));
            }
            Ok(Example {
                streams: model.stream_images(&img)?,
                captions,
            })
        })
        .collect()
}

/// Summed loss and token counts over the non-pad positions of a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub tokens: usize,
    pub correct: usize,
}

impl BatchStats {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.tokens.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.tokens.max(1) as f64
    }

    fn add(&mut self, other: BatchStats) {
        self.loss_sum += other.loss_sum;
        self.tokens += other.tokens;
        self.correct += other.correct;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub token_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub initial_loss: f64,
    pub initial_accuracy: f64,
    pub epochs: Vec<EpochStats>,
    pub total_steps: usize,
}

impl TrainingLog {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.loss)
    }

    /// `epoch,steps,loss,token_accuracy`; epoch 0 is the pre-training evaluation.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,steps,loss,token_accuracy\n");
        s.push_str(&format!("0,0,{:.12},{:.6}\n", self.initial_loss, self.initial_accuracy));
        for e in &self.epochs {
            s.push_str(&format!("{},{},{:.12},{:.6}\n", e.epoch, e.steps, e.loss, e.token_accuracy));
        }
        s
    }
}

fn selected_captions(ex: &Example, limit: Option<usize>) -> &[Vec<TokenId>] {
    let k = limit.unwrap_or(usize::MAX).min(ex.captions.len());
    &ex.captions[..k]
}

/// Teacher-forced loss and token accuracy over every selected caption.
pub fn evaluate_teacher_forced(model: &CaptionModel, examples: &[Example], captions_per_image: Option<usize>) -> Result<BatchStats> {
    let mut total = BatchStats::default();
    for chunk in examples.chunks(model.config().train.batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        total.add(model.batch_loss(&refs, captions_per_image, None)?);
    }
    Ok(total)
}

/// Trains with Adam on mini-batches of images in a seeded shuffled order.
pub fn train(model: &mut CaptionModel, examples: &[Example]) -> Result<TrainingLog> {
    train_with(model, examples, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model: &mut CaptionModel,
    examples: &[Example],
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainingLog> {
    if examples.is_empty() || examples.iter().all(|e| e.captions.is_empty()) {
        return Err(Error::Data("training set is empty".into()));
    }
    let cfg = model.config().train.clone();
    let max = model.config().max_caption_len;
    if let Some(c) = examples.iter().flat_map(|e| &e.captions).find(|c| c.len() > max) {
        return Err(Error::Data(format!(
            "caption has {} words, max_caption_len is {max}",
            c.len()
        )));
    }
    let initial = evaluate_teacher_forced(model, examples, cfg.captions_per_image)?;
    let mut log = TrainingLog {
        initial_loss: initial.mean_loss(),
        initial_accuracy: initial.accuracy(),
        ..TrainingLog::default()
    };
    let mut rng = seeded_rng(model.config().seed ^ 0x5eed_7a11);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut grad = model.params.zeros_like();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let budget = cfg.max_steps.unwrap_or(usize::MAX);
    for epoch in 1..=cfg.epochs {
        if log.total_steps >= budget {
            break;
        }
        order.shuffle(&mut rng);
        let mut stats = BatchStats::default();
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            grad.zero();
            let s = model.batch_loss(&batch, cfg.captions_per_image, Some(&mut grad))?;
            stats.add(s);
            apply_adam(&mut adam, &mut model.params, &grad)?;
            steps += 1;
            log.total_steps += 1;
            if log.total_steps >= budget {
                break;
            }
        }
        let e = epoch_stats(epoch, steps, stats);
        on_epoch(&e);
        log.epochs.push(e);
        if cfg.stop_at_accuracy.is_some_and(|t| e.token_accuracy >= t) {
            break;
        }
    }
    Ok(log)
}

fn epoch_stats(epoch: usize, steps: usize, s: BatchStats) -> EpochStats {
    EpochStats {
        epoch,
        steps,
        loss: s.mean_loss(),
        token_accuracy: s.accuracy(),
    }
}

fn apply_adam(adam: &mut AdamState, params: &mut CaptionParams, grad: &CaptionParams) -> Result<()> {
    let mut p: Vec<_> = params.tensors_mut().into_iter().map(|(_, t)| t).collect();
    let g: Vec<_> = grad.tensors().into_iter().map(|(_, t)| t).collect();
    adam.step(&mut p, &g)
}

struct StreamForward {
    lstm: Vec<LstmBatchCache>,
    /// `(T * n) x (l1_out + hidden)`, time-major.
    cat: Vec<f64>,
    /// `(T * n) x l2_out`
    z: Vec<f64>,
}

impl CaptionModel {
    /// Teacher-forced forward pass over `batch`. When `grad` is given the
    /// gradient of the mean token loss is accumulated into it.
    pub fn batch_loss(
        &self,
        batch: &[&Example],
        captions_per_image: Option<usize>,
        mut grad: Option<&mut CaptionParams>,
    ) -> Result<BatchStats> {
        let p = &self.params;
        let cfg = self.config();
        let (l1o, hid, l2o) = (cfg.l1_out, cfg.hidden_dim, cfg.l2_out);
        let v = self.vocab_size();
        let m = batch.len();

        // Encoders and L1, once per image.
        let mut enc_caches: Vec<Vec<EncoderCache>> = Vec::with_capacity(m);
        let mut l1_in: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(m); p.decoders.len()];
        for ex in batch {
            if ex.streams.len() != p.encoders.len() {
                return Err(Error::Shape(format!(
                    "example has {} stream images, model has {} encoders",
                    ex.streams.len(),
                    p.encoders.len()
                )));
            }
            let mut feats = Vec::with_capacity(p.encoders.len());
            let mut caches = Vec::with_capacity(p.encoders.len());
            for (e, img) in p.encoders.iter().zip(&ex.streams) {
                let (f, c) = e.forward_cached(img)?;
                feats.push(f);
                caches.push(c);
            }
            for (d, x) in self.l1_inputs(&feats)?.into_iter().enumerate() {
                l1_in[d].push(x);
            }
            enc_caches.push(caches);
        }
        let ctx: Vec<Vec<f64>> = p
            .decoders
            .iter()
            .zip(&l1_in)
            .map(|(d, xs)| d.l1.forward_batch(&xs.concat(), m))
            .collect::<Result<_>>()?;

        // Rows: one per (image, caption).
        let mut row_image = Vec::new();
        let mut row_caps: Vec<&[TokenId]> = Vec::new();
        for (i, ex) in batch.iter().enumerate() {
            for c in selected_captions(ex, captions_per_image) {
                row_image.push(i);
                row_caps.push(c);
            }
        }
        let n = row_caps.len();
        if n == 0 {
            return Ok(BatchStats::default());
        }
        let steps = row_caps.iter().map(|c| c.len() + 1).max().unwrap_or(1);
        let mut inputs = vec![PAD; steps * n];
        let mut targets = vec![PAD; steps * n];
        for (r, cap) in row_caps.iter().enumerate() {
            for t in 0..=cap.len() {
                let tok = cap.get(t).copied().unwrap_or(END);
                if tok >= v {
                    return Err(Error::Index { index: tok, size: v });
                }
                inputs[t * n + r] = if t == 0 { START } else { cap[t - 1] };
                targets[t * n + r] = tok;
            }
        }

        let mut fwd = Vec::with_capacity(p.decoders.len());
        for (d, dec) in p.decoders.iter().enumerate() {
            let mut h = vec![0.0; n * hid];
            let mut c = vec![0.0; n * hid];
            let mut cat = Vec::with_capacity(steps * n * (l1o + hid));
            let mut caches = Vec::with_capacity(steps);
            let e = cfg.embed_dim;
            for t in 0..steps {
                let mut x = Vec::with_capacity(n * e);
                for r in 0..n {
                    x.extend_from_slice(dec.embed.lookup(inputs[t * n + r])?);
                }
                let (h2, c2, cache) = dec.lstm.step_batch(&x, &h, &c, n)?;
                for r in 0..n {
                    let i = row_image[r];
                    cat.extend_from_slice(&ctx[d][i * l1o..(i + 1) * l1o]);
                    cat.extend_from_slice(&h2[r * hid..(r + 1) * hid]);
                }
                caches.push(cache);
                h = h2;
                c = c2;
            }
            let z = dec.l2.forward_batch(&cat, steps * n)?;
            fwd.push(StreamForward { lstm: caches, cat, z });
        }

        let rows = steps * n;
        let joined_dim = l2o * fwd.len();
        let joined = if fwd.len() == 1 {
            fwd[0].z.clone()
        } else {
            let mut j = Vec::with_capacity(rows * joined_dim);
            for k in 0..rows {
                for s in &fwd {
                    j.extend_from_slice(&s.z[k * l2o..(k + 1) * l2o]);
                }
            }
            j
        };
        let mut probs = p.l3.forward_batch(&joined, rows)?;

        let mut stats = BatchStats::default();
        for (k, row) in probs.chunks_exact_mut(v).enumerate() {
            crate::nncore::softmax_in_place(row);
            let tgt = targets[k];
            if tgt == PAD {
                continue;
            }
            stats.tokens += 1;
            stats.loss_sum -= row[tgt].max(crate::nncore::LOG_FLOOR).ln();
            let mut best = 0;
            for (j, &pj) in row.iter().enumerate() {
                if pj > row[best] {
                    best = j;
                }
            }
            if best == tgt {
                stats.correct += 1;
            }
        }
        let Some(g) = grad.as_deref_mut() else {
            return Ok(stats);
        };

        // Backward.
        let scale = 1.0 / stats.tokens.max(1) as f64;
        let mut dlogits = probs;
        for (k, row) in dlogits.chunks_exact_mut(v).enumerate() {
            let tgt = targets[k];
            if tgt == PAD {
                row.fill(0.0);
                continue;
            }
            row[tgt] -= 1.0;
            row.iter_mut().for_each(|x| *x *= scale);
        }
        let djoined = p.l3.backward_batch(&joined, &dlogits, rows, &mut g.l3)?;
        let mut dl1_in = Vec::with_capacity(fwd.len());
        for (d, s) in fwd.iter().enumerate() {
            let dec = &p.decoders[d];
            let dz: Vec<f64> = if fwd.len() == 1 {
                djoined.clone()
            } else {
                djoined
                    .chunks_exact(joined_dim)
                    .flat_map(|r| r[d * l2o..(d + 1) * l2o].iter().copied())
                    .collect()
            };
            let gd = &mut g.decoders[d];
            let dcat = dec.l2.backward_batch(&s.cat, &dz, rows, &mut gd.l2)?;
            let w = l1o + hid;
            let mut dctx = vec![0.0; m * l1o];
            let mut dh_next = vec![0.0; n * hid];
            let mut dc_next = vec![0.0; n * hid];
            for t in (0..steps).rev() {
                let mut dh = dh_next;
                for r in 0..n {
                    let row = &dcat[(t * n + r) * w..(t * n + r + 1) * w];
                    let i = row_image[r];
                    for (a, b) in dctx[i * l1o..(i + 1) * l1o].iter_mut().zip(&row[..l1o]) {
                        *a += b;
                    }
                    for (a, b) in dh[r * hid..(r + 1) * hid].iter_mut().zip(&row[l1o..]) {
                        *a += b;
                    }
                }
                let (dx, dh_prev, dc_prev) = dec.lstm.backward_batch(&s.lstm[t], &dh, &dc_next, &mut gd.lstm)?;
                let e = cfg.embed_dim;
                for r in 0..n {
                    dec.embed.backward(inputs[t * n + r], &dx[r * e..(r + 1) * e], &mut gd.embed)?;
                }
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            let xs = l1_in[d].concat();
            dl1_in.push(dec.l1.backward_batch(&xs, &dctx, m, &mut gd.l1)?);
        }
        for i in 0..m {
            let per_decoder: Vec<Vec<f64>> = dl1_in
                .iter()
                .zip(&l1_in)
                .map(|(dx, xs)| {
                    let w = xs[0].len();
                    dx[i * w..(i + 1) * w].to_vec()
                })
                .collect();
            for (e, dfeat) in self.l1_input_grads(per_decoder).iter().enumerate() {
                p.encoders[e].backward(&enc_caches[i][e], dfeat, &mut g.encoders[e])?;
            }
        }
        Ok(stats)
    }
}
