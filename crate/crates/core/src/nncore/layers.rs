use super::{matmul, ParamSet, Rng, Tensor, Trans};
use crate::error::{Error, Result};

/// Dense layer `y = W x + b` with `W: out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearParams {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        LinearParams {
            weight: Tensor::uniform(&[out_dim, in_dim], in_dim, rng),
            bias: Tensor::uniform(&[out_dim], in_dim, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check_input(&self, len: usize, n: usize) -> Result<()> {
        if len != n * self.in_dim() {
            return Err(Error::Shape(format!(
                "linear layer expects {n} x {} input, got {len} values",
                self.in_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(x, 1)
    }

    /// `x` is `n x in`, result is `n x out`.
    pub fn forward_batch(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_input(x.len(), n)?;
        let out = self.out_dim();
        let mut y = Vec::with_capacity(n * out);
        for _ in 0..n {
            y.extend_from_slice(self.bias.data());
        }
        matmul(n, self.in_dim(), out, x, Trans::N, self.weight.data(), Trans::T, 1.0, &mut y);
        Ok(y)
    }

    /// Accumulates `dW += dy^T x`, `db += sum(dy)` into `grad` and returns `dx = dy W`.
    pub fn backward_batch(
        &self,
        x: &[f64],
        dy: &[f64],
        n: usize,
        grad: &mut LinearParams,
    ) -> Result<Vec<f64>> {
        self.check_input(x.len(), n)?;
        let (inp, out) = (self.in_dim(), self.out_dim());
        if dy.len() != n * out {
            return Err(Error::Shape(format!(
                "linear backward expects {n} x {out} upstream gradient, got {} values",
                dy.len()
            )));
        }
        if grad.weight.shape() != self.weight.shape() {
            return Err(Error::Shape("gradient buffer does not match layer".into()));
        }
        matmul(out, n, inp, dy, Trans::T, x, Trans::N, 1.0, grad.weight.data_mut());
        let db = grad.bias.data_mut();
        for row in dy.chunks_exact(out) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; n * inp];
        matmul(n, out, inp, dy, Trans::N, self.weight.data(), Trans::N, 0.0, &mut dx);
        Ok(dx)
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut LinearParams) -> Result<Vec<f64>> {
        self.backward_batch(x, dy, 1, grad)
    }
}

impl ParamSet for LinearParams {
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

pub fn linear_forward(p: &LinearParams, x: &Tensor) -> Result<Tensor> {
    Ok(Tensor::from_vec(p.forward(x.data())?))
}

/// Returns `(dx, dW, db)` for one sample.
pub fn linear_backward(
    p: &LinearParams,
    x: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let mut grad = LinearParams::zeros(p.in_dim(), p.out_dim());
    let dx = p.backward(x.data(), dy.data(), &mut grad)?;
    Ok((Tensor::from_vec(dx), grad.weight, grad.bias))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingParams {
    pub table: Tensor,
}

impl EmbeddingParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize) -> Self {
        EmbeddingParams {
            table: Tensor::zeros(&[vocab_size, embed_dim]),
        }
    }

    pub fn init(vocab_size: usize, embed_dim: usize, rng: &mut Rng) -> Self {
        EmbeddingParams {
            table: Tensor::uniform(&[vocab_size, embed_dim], embed_dim, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn lookup(&self, token: usize) -> Result<&[f64]> {
        let (v, e) = (self.vocab_size(), self.embed_dim());
        if token >= v {
            return Err(Error::Index {
                index: token,
                size: v,
            });
        }
        Ok(&self.table.data()[token * e..(token + 1) * e])
    }

    /// Adds `dy` into the gradient row of `token`.
    pub fn backward(&self, token: usize, dy: &[f64], grad: &mut EmbeddingParams) -> Result<()> {
        let (v, e) = (self.vocab_size(), self.embed_dim());
        if token >= v {
            return Err(Error::Index {
                index: token,
                size: v,
            });
        }
        if dy.len() != e {
            return Err(Error::Shape(format!(
                "embedding gradient has {} values, expected {e}",
                dy.len()
            )));
        }
        let row = &mut grad.table.data_mut()[token * e..(token + 1) * e];
        for (g, d) in row.iter_mut().zip(dy) {
            *g += d;
        }
        Ok(())
    }
}

impl ParamSet for EmbeddingParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("table".into(), &self.table)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("table".into(), &mut self.table)]
    }
}

pub fn embedding_lookup(p: &EmbeddingParams, token: usize) -> Result<Tensor> {
    Ok(Tensor::from_vec(p.lookup(token)?.to_vec()))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
