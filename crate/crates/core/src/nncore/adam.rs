use super::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam. Moment buffers are created on the first step and
/// paired with parameters by position.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(1e-3)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState::with_hyper(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "adam got {} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient shape {:?} does not mirror parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| p.zeros_like()).collect();
            self.v = params.iter().map(|p| p.zeros_like()).collect();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(Error::Shape("adam moments do not mirror parameters".into()));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            for (((w, &gi), mi), vi) in pd
                .iter_mut()
                .zip(gd)
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
