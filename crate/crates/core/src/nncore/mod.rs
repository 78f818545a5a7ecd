//! Minimal double-precision neural-network substrate: tensors, dense layers,
//! an LSTM cell with hand-written backward passes, softmax / cross-entropy,
//! Adam and a central-difference gradient checker.
//!
//! Batched entry points take row-major `n x dim` slices; the single-sample
//! functions are thin wrappers with `n = 1`.

mod adam;
mod gemm;
mod gradcheck;
mod layers;
mod loss;
mod lstm;

pub use adam::AdamState;
pub use gemm::{matmul, Trans};
pub use gradcheck::{grad_check, relative_error, DEFAULT_FD_EPS};
pub use layers::{
    embedding_lookup, gelu, gelu_grad, linear_backward, linear_forward, EmbeddingParams,
    LinearParams,
};
pub use loss::{cross_entropy, cross_entropy_grad, softmax, softmax_in_place, LOG_FLOOR};
pub use lstm::{LstmBatchCache, LstmCache, LstmParams};

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded_rng(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Uniform(-s, s) with `s = sqrt(1 / fan_in)`.
    pub fn uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Self {
        let s = (1.0 / fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.random_range(-s..s)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add {:?} into {:?}",
                other.shape, self.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A fixed, ordered collection of named parameter tensors. The order is part
/// of the contract: optimizers and checkpoints pair tensors by position.
pub trait ParamSet {
    fn tensors(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// Flattens every parameter into one vector (in `tensors()` order).
    fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }

    /// Inverse of [`ParamSet::flatten`].
    fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::Shape(format!(
                "expected {total} flat parameters, got {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    items: Vec<(String, &'a Tensor)>,
) -> impl Iterator<Item = (String, &'a Tensor)> + use<'a> {
    let prefix = prefix.to_string();
    items
        .into_iter()
        .map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

pub(crate) fn prefixed_mut<'a>(
    prefix: &str,
    items: Vec<(String, &'a mut Tensor)>,
) -> impl Iterator<Item = (String, &'a mut Tensor)> + use<'a> {
    let prefix = prefix.to_string();
    items
        .into_iter()
        .map(move |(n, t)| (format!("{prefix}.{n}"), t))
}
