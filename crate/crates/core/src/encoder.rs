//! Convolutional image encoder and the two feature-fusion operators.
//!
//! The encoder is three 3x3 stride-2 convolutions with GELU, global average
//! pooling, and a linear projection to `feature_dim`. Activations are kept in
//! position-major layout (`[y][x][channel]`), which is also the interleaved
//! layout of [`Image`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::Image;
use crate::nncore::{
    gelu, gelu_grad, matmul, prefixed, prefixed_mut, LinearParams, ParamSet, Rng, Tensor, Trans,
};

pub type FeatureVec = Vec<f64>;

/// Interleaves two equal-length vectors: `[p0, q0, p1, q1, ...]`.
pub fn positionwise_concat<T: Clone>(p: &[T], q: &[T]) -> Result<Vec<T>> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "position-wise concatenation needs equal lengths, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut out = Vec::with_capacity(2 * p.len());
    for (a, b) in p.iter().zip(q) {
        out.push(a.clone());
        out.push(b.clone());
    }
    Ok(out)
}

/// Appends `q` after `p`.
pub fn concat<T: Clone>(p: &[T], q: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(p.len() + q.len());
    out.extend_from_slice(p);
    out.extend_from_slice(q);
    out
}

/// Splits an interleaved vector back into its even and odd positions.
pub fn deinterleave<T: Clone>(v: &[T]) -> (Vec<T>, Vec<T>) {
    let even = v.iter().step_by(2).cloned().collect();
    let odd = v.iter().skip(1).step_by(2).cloned().collect();
    (even, odd)
}

pub fn project_l1(p: &LinearParams, fused: &[f64]) -> Result<FeatureVec> {
    p.forward(fused)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderShape {
    /// Square input side in pixels.
    pub input_size: usize,
    /// Output channels of the three conv blocks (input is always RGB).
    pub channels: [usize; 3],
    pub feature_dim: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        EncoderShape {
            input_size: 64,
            channels: [16, 32, 64],
            feature_dim: 128,
        }
    }
}

const KSIZE: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

fn conv_out(n: usize) -> usize {
    (n + 2 * PAD - KSIZE) / STRIDE + 1
}

/// 3x3 stride-2 convolution, zero padding 1. Weight layout `[out][ky][kx][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2dParams {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Conv2dParams {
            weight: Tensor::zeros(&[out_ch, KSIZE, KSIZE, in_ch]),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn init(in_ch: usize, out_ch: usize, rng: &mut Rng) -> Self {
        let fan_in = in_ch * KSIZE * KSIZE;
        Conv2dParams {
            weight: Tensor::uniform(&[out_ch, KSIZE, KSIZE, in_ch], fan_in, rng),
            bias: Tensor::uniform(&[out_ch], fan_in, rng),
        }
    }

    fn in_ch(&self) -> usize {
        self.weight.shape()[3]
    }

    fn out_ch(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl ParamSet for Conv2dParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}

fn im2col(input: &[f64], h: usize, w: usize, c: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (conv_out(h), conv_out(w));
    let row_len = KSIZE * KSIZE * c;
    let mut cols = vec![0.0; oh * ow * row_len];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * row_len..(oy * ow + ox + 1) * row_len];
            for ky in 0..KSIZE {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KSIZE {
                    let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c;
                    let dst = (ky * KSIZE + kx) * c;
                    row[dst..dst + c].copy_from_slice(&input[src..src + c]);
                }
            }
        }
    }
    (cols, oh, ow)
}

fn col2im(dcols: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (conv_out(h), conv_out(w));
    let row_len = KSIZE * KSIZE * c;
    let mut out = vec![0.0; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &dcols[(oy * ow + ox) * row_len..(oy * ow + ox + 1) * row_len];
            for ky in 0..KSIZE {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KSIZE {
                    let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * c;
                    let src = (ky * KSIZE + kx) * c;
                    for k in 0..c {
                        out[dst + k] += row[src + k];
                    }
                }
            }
        }
    }
    out
}

struct ConvCache {
    in_h: usize,
    in_w: usize,
    cols: Vec<f64>,
    pre: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvEncoderParams {
    pub convs: Vec<Conv2dParams>,
    pub proj: LinearParams,
    input_size: usize,
}

/// Intermediates kept by [`ConvEncoderParams::forward_cached`] for the backward pass.
pub struct EncoderCache {
    convs: Vec<ConvCache>,
    pooled: Vec<f64>,
    final_hw: usize,
}

impl ConvEncoderParams {
    pub fn zeros(shape: &EncoderShape) -> Self {
        let chans = [3, shape.channels[0], shape.channels[1], shape.channels[2]];
        ConvEncoderParams {
            convs: (0..3).map(|i| Conv2dParams::zeros(chans[i], chans[i + 1])).collect(),
            proj: LinearParams::zeros(chans[3], shape.feature_dim),
            input_size: shape.input_size,
        }
    }

    pub fn init(shape: &EncoderShape, rng: &mut Rng) -> Self {
        let chans = [3, shape.channels[0], shape.channels[1], shape.channels[2]];
        let convs = (0..3)
            .map(|i| Conv2dParams::init(chans[i], chans[i + 1], rng))
            .collect();
        ConvEncoderParams {
            convs,
            proj: LinearParams::init(chans[3], shape.feature_dim, rng),
            input_size: shape.input_size,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.proj.out_dim()
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.width() != self.input_size || img.height() != self.input_size || img.channels() != 3
        {
            return Err(Error::Shape(format!(
                "encoder expects a {n}x{n}x3 image, got {}x{}x{}",
                img.width(),
                img.height(),
                img.channels(),
                n = self.input_size
            )));
        }
        Ok(())
    }

    pub fn forward(&self, img: &Image) -> Result<FeatureVec> {
        Ok(self.forward_cached(img)?.0)
    }

    pub fn forward_cached(&self, img: &Image) -> Result<(FeatureVec, EncoderCache)> {
        self.check_image(img)?;
        let (mut h, mut w) = (img.height(), img.width());
        let mut act = img.data().to_vec();
        let mut caches = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (ci, co) = (conv.in_ch(), conv.out_ch());
            let (cols, oh, ow) = im2col(&act, h, w, ci);
            let positions = oh * ow;
            let mut pre = Vec::with_capacity(positions * co);
            for _ in 0..positions {
                pre.extend_from_slice(conv.bias.data());
            }
            matmul(
                positions,
                KSIZE * KSIZE * ci,
                co,
                &cols,
                Trans::N,
                conv.weight.data(),
                Trans::T,
                1.0,
                &mut pre,
            );
            act = pre.iter().map(|&v| gelu(v)).collect();
            caches.push(ConvCache {
                in_h: h,
                in_w: w,
                cols,
                pre,
            });
            h = oh;
            w = ow;
        }
        let c = self.proj.in_dim();
        let positions = h * w;
        let mut pooled = vec![0.0; c];
        for px in act.chunks_exact(c) {
            for (p, v) in pooled.iter_mut().zip(px) {
                *p += v;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= positions as f64);
        let feat = self.proj.forward(&pooled)?;
        Ok((
            feat,
            EncoderCache {
                convs: caches,
                pooled,
                final_hw: positions,
            },
        ))
    }

    /// Accumulates parameter gradients for `dfeat`. Pixel gradients are not
    /// propagated.
    pub fn backward(&self, cache: &EncoderCache, dfeat: &[f64], grad: &mut ConvEncoderParams) -> Result<()> {
        if cache.convs.len() != self.convs.len() || grad.convs.len() != self.convs.len() {
            return Err(Error::Shape("encoder cache does not match parameters".into()));
        }
        let dpooled = self.proj.backward(&cache.pooled, dfeat, &mut grad.proj)?;
        let c = dpooled.len();
        let positions = cache.final_hw;
        let mut dact = Vec::with_capacity(positions * c);
        for _ in 0..positions {
            dact.extend(dpooled.iter().map(|d| d / positions as f64));
        }
        for (idx, (conv, cc)) in self.convs.iter().zip(&cache.convs).enumerate().rev() {
            let (ci, co) = (conv.in_ch(), conv.out_ch());
            let positions = cc.pre.len() / co;
            let dpre: Vec<f64> = dact
                .iter()
                .zip(&cc.pre)
                .map(|(d, &p)| d * gelu_grad(p))
                .collect();
            let g = &mut grad.convs[idx];
            let k = KSIZE * KSIZE * ci;
            matmul(co, positions, k, &dpre, Trans::T, &cc.cols, Trans::N, 1.0, g.weight.data_mut());
            let db = g.bias.data_mut();
            for row in dpre.chunks_exact(co) {
                for (b, d) in db.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if idx > 0 {
                let mut dcols = vec![0.0; positions * k];
                matmul(positions, co, k, &dpre, Trans::N, conv.weight.data(), Trans::N, 0.0, &mut dcols);
                dact = col2im(&dcols, cc.in_h, cc.in_w, ci);
            }
        }
        Ok(())
    }
}

impl ParamSet for ConvEncoderParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.extend(prefixed(&format!("conv{i}"), c.tensors()));
        }
        out.extend(prefixed("proj", self.proj.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("conv{i}"), c.tensors_mut()));
        }
        out.extend(prefixed_mut("proj", self.proj.tensors_mut()));
        out
    }
}

pub fn conv_encode(p: &ConvEncoderParams, img: &Image) -> Result<FeatureVec> {
    p.forward(img)
}
