use super::{matmul, ParamSet, Rng, Tensor, Trans};
use crate::error::{Error, Result};

/// LSTM cell. Gate blocks are stacked along the first axis in the order
/// input, forget, cell candidate, output:
///
/// ```text
/// i = sig(Wi x + Ui h + bi)    f = sig(Wf x + Uf h + bf)
/// g = tanh(Wg x + Ug h + bg)   o = sig(Wo x + Uo h + bo)
/// c' = f * c + i * g           h' = o * tanh(c')
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4H x I`
    pub w: Tensor,
    /// `4H x H`
    pub u: Tensor,
    /// `4H`
    pub b: Tensor,
}

/// Forward intermediates for a batch of `n` rows.
#[derive(Clone, Debug)]
pub struct LstmBatchCache {
    pub n: usize,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Activated gates, `n x 4H`.
    pub gates: Vec<f64>,
    pub c_new: Vec<f64>,
    pub tanh_c_new: Vec<f64>,
}

pub type LstmCache = LstmBatchCache;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            w: Tensor::zeros(&[4 * hidden_dim, input_dim]),
            u: Tensor::zeros(&[4 * hidden_dim, hidden_dim]),
            b: Tensor::zeros(&[4 * hidden_dim]),
        }
    }

    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        LstmParams {
            w: Tensor::uniform(&[4 * hidden_dim, input_dim], input_dim, rng),
            u: Tensor::uniform(&[4 * hidden_dim, hidden_dim], hidden_dim, rng),
            b: Tensor::uniform(&[4 * hidden_dim], hidden_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.shape()[1]
    }

    /// One step for `n` independent rows. Returns `(h', c', cache)`.
    pub fn step_batch(
        &self,
        x: &[f64],
        h: &[f64],
        c: &[f64],
        n: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, LstmBatchCache)> {
        let (inp, hid) = (self.input_dim(), self.hidden_dim());
        if x.len() != n * inp || h.len() != n * hid || c.len() != n * hid {
            return Err(Error::Shape(format!(
                "lstm step expects x {n}x{inp}, h/c {n}x{hid}; got {}, {}, {}",
                x.len(),
                h.len(),
                c.len()
            )));
        }
        let g4 = 4 * hid;
        let mut gates = Vec::with_capacity(n * g4);
        for _ in 0..n {
            gates.extend_from_slice(self.b.data());
        }
        matmul(n, inp, g4, x, Trans::N, self.w.data(), Trans::T, 1.0, &mut gates);
        matmul(n, hid, g4, h, Trans::N, self.u.data(), Trans::T, 1.0, &mut gates);

        let mut c_new = vec![0.0; n * hid];
        let mut tanh_c_new = vec![0.0; n * hid];
        let mut h_new = vec![0.0; n * hid];
        for r in 0..n {
            let row = &mut gates[r * g4..(r + 1) * g4];
            for v in &mut row[..2 * hid] {
                *v = sigmoid(*v);
            }
            for v in &mut row[2 * hid..3 * hid] {
                *v = v.tanh();
            }
            for v in &mut row[3 * hid..] {
                *v = sigmoid(*v);
            }
            for j in 0..hid {
                let k = r * hid + j;
                let (i, f, g, o) = (row[j], row[hid + j], row[2 * hid + j], row[3 * hid + j]);
                c_new[k] = f * c[k] + i * g;
                tanh_c_new[k] = c_new[k].tanh();
                h_new[k] = o * tanh_c_new[k];
            }
        }
        let cache = LstmBatchCache {
            n,
            x: x.to_vec(),
            h: h.to_vec(),
            c: c.to_vec(),
            gates,
            c_new: c_new.clone(),
            tanh_c_new,
        };
        Ok((h_new, c_new, cache))
    }

    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
        self.step_batch(x, h, c, 1)
    }

    /// Backward through one step. Parameter gradients are accumulated into
    /// `grad`; returns `(dx, dh, dc)` for the step's inputs.
    pub fn backward_batch(
        &self,
        cache: &LstmBatchCache,
        dh_new: &[f64],
        dc_new: &[f64],
        grad: &mut LstmParams,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (inp, hid, n) = (self.input_dim(), self.hidden_dim(), cache.n);
        let g4 = 4 * hid;
        if cache.x.len() != n * inp
            || cache.gates.len() != n * g4
            || dh_new.len() != n * hid
            || dc_new.len() != n * hid
        {
            return Err(Error::Shape(
                "lstm backward: cache or upstream gradient does not match this layer".into(),
            ));
        }
        if grad.w.shape() != self.w.shape() || grad.u.shape() != self.u.shape() {
            return Err(Error::Shape("lstm gradient buffer does not match layer".into()));
        }

        let mut da = vec![0.0; n * g4];
        let mut dc = vec![0.0; n * hid];
        for r in 0..n {
            let gates = &cache.gates[r * g4..(r + 1) * g4];
            let da_row = &mut da[r * g4..(r + 1) * g4];
            for j in 0..hid {
                let k = r * hid + j;
                let (i, f, g, o) = (gates[j], gates[hid + j], gates[2 * hid + j], gates[3 * hid + j]);
                let tc = cache.tanh_c_new[k];
                let d_o = dh_new[k] * tc;
                let dct = dc_new[k] + dh_new[k] * o * (1.0 - tc * tc);
                let di = dct * g;
                let dg = dct * i;
                let df = dct * cache.c[k];
                dc[k] = dct * f;
                da_row[j] = di * i * (1.0 - i);
                da_row[hid + j] = df * f * (1.0 - f);
                da_row[2 * hid + j] = dg * (1.0 - g * g);
                da_row[3 * hid + j] = d_o * o * (1.0 - o);
            }
        }

        matmul(g4, n, inp, &da, Trans::T, &cache.x, Trans::N, 1.0, grad.w.data_mut());
        matmul(g4, n, hid, &da, Trans::T, &cache.h, Trans::N, 1.0, grad.u.data_mut());
        let db = grad.b.data_mut();
        for row in da.chunks_exact(g4) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; n * inp];
        matmul(n, g4, inp, &da, Trans::N, self.w.data(), Trans::N, 0.0, &mut dx);
        let mut dh = vec![0.0; n * hid];
        matmul(n, g4, hid, &da, Trans::N, self.u.data(), Trans::N, 0.0, &mut dh);
        Ok((dx, dh, dc))
    }

    pub fn backward(
        &self,
        cache: &LstmCache,
        dh_new: &[f64],
        dc_new: &[f64],
        grad: &mut LstmParams,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.backward_batch(cache, dh_new, dc_new, grad)
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w".into(), &self.w),
            ("u".into(), &self.u),
            ("b".into(), &self.b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w".into(), &mut self.w),
            ("u".into(), &mut self.u),
            ("b".into(), &mut self.b),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{grad_check, seeded_rng};

    #[test]
    fn zero_everything() {
        let p = LstmParams::zeros(3, 4);
        let (h, c, cache) = p.step(&[0.0; 3], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|v| *v == 0.0));
        // i = f = o = 0.5, g = 0
        assert_eq!(&cache.gates[..4], &[0.5; 4]);
        assert_eq!(&cache.gates[8..12], &[0.0; 4]);
    }

    #[test]
    fn zero_params_halve_cell() {
        let p = LstmParams::zeros(2, 3);
        let v = [1.0, -2.0, 0.25];
        let (_, c, _) = p.step(&[0.3, 0.1], &[0.5, 0.5, 0.5], &v).unwrap();
        for (a, b) in c.iter().zip(v) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = seeded_rng(4);
        let p = LstmParams::init(3, 3, &mut rng);
        let (_, _, cache) = p.step(&[0.1, 0.2, 0.3], &[0.0; 3], &[0.1; 3]).unwrap();
        let mut g = LstmParams::zeros(3, 3);
        let (dx, dh, dc) = p.backward(&cache, &[0.0; 3], &[0.0; 3], &mut g).unwrap();
        assert!(g.flatten().iter().chain(&dx).chain(&dh).chain(&dc).all(|v| *v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = seeded_rng(4);
        let p = LstmParams::init(3, 3, &mut rng);
        let q = LstmParams::init(2, 3, &mut rng);
        let (_, _, cache) = q.step(&[0.1, 0.2], &[0.0; 3], &[0.0; 3]).unwrap();
        let mut g = LstmParams::zeros(3, 3);
        assert!(p.backward(&cache, &[1.0; 3], &[0.0; 3], &mut g).is_err());
    }

    fn weighted_sum(v: &[f64], w: &[f64]) -> f64 {
        v.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn single_step_grad_check() {
        let mut rng = seeded_rng(21);
        let p = LstmParams::init(3, 3, &mut rng);
        let inputs = Tensor::uniform(&[9], 1, &mut rng).into_data();
        let (rh, rc) = (
            Tensor::uniform(&[3], 1, &mut rng).into_data(),
            Tensor::uniform(&[3], 1, &mut rng).into_data(),
        );
        // loss = rh . h' + rc . c' as a function of params and (x, h, c)
        let loss = |p: &LstmParams, xs: &[f64]| {
            let (h, c, _) = p.step(&xs[..3], &xs[3..6], &xs[6..]).unwrap();
            weighted_sum(&h, &rh) + weighted_sum(&c, &rc)
        };
        let (_, _, cache) = p.step(&inputs[..3], &inputs[3..6], &inputs[6..]).unwrap();
        let mut g = LstmParams::zeros(3, 3);
        let (dx, dh, dc) = p.backward(&cache, &rh, &rc, &mut g).unwrap();

        let err = grad_check(
            |w| {
                let mut q = p.clone();
                q.unflatten(w).unwrap();
                loss(&q, &inputs)
            },
            &p.flatten(),
            &g.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "params {err}");
        let analytic: Vec<f64> = dx.into_iter().chain(dh).chain(dc).collect();
        let err = grad_check(|xs| loss(&p, xs), &inputs, &analytic, 1e-5).unwrap();
        assert!(err < 1e-4, "inputs {err}");
    }

    #[test]
    fn bptt_three_steps() {
        let mut rng = seeded_rng(8);
        let p = LstmParams::init(2, 3, &mut rng);
        let xs = Tensor::uniform(&[3, 2], 1, &mut rng).into_data();
        let r = Tensor::uniform(&[3], 1, &mut rng).into_data();
        let run = |p: &LstmParams| {
            let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
            let mut caches = Vec::new();
            let mut total = 0.0;
            for t in 0..3 {
                let (h2, c2, cache) = p.step(&xs[t * 2..t * 2 + 2], &h, &c).unwrap();
                total += weighted_sum(&h2, &r);
                h = h2;
                c = c2;
                caches.push(cache);
            }
            (total, caches)
        };
        let (_, caches) = run(&p);
        let mut g = LstmParams::zeros(2, 3);
        let (mut dh, mut dc) = (vec![0.0; 3], vec![0.0; 3]);
        for cache in caches.iter().rev() {
            let dh_total: Vec<f64> = dh.iter().zip(&r).map(|(a, b)| a + b).collect();
            let (_, dh_prev, dc_prev) = p.backward(cache, &dh_total, &dc, &mut g).unwrap();
            dh = dh_prev;
            dc = dc_prev;
        }
        let err = grad_check(
            |w| {
                let mut q = p.clone();
                q.unflatten(w).unwrap();
                run(&q).0
            },
            &p.flatten(),
            &g.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn batch_matches_single_rows() {
        let mut rng = seeded_rng(13);
        let p = LstmParams::init(2, 3, &mut rng);
        let x = Tensor::uniform(&[2, 2], 1, &mut rng).into_data();
        let h = Tensor::uniform(&[2, 3], 1, &mut rng).into_data();
        let c = Tensor::uniform(&[2, 3], 1, &mut rng).into_data();
        let (hb, cb, _) = p.step_batch(&x, &h, &c, 2).unwrap();
        for r in 0..2 {
            let (hs, cs, _) = p
                .step(&x[r * 2..r * 2 + 2], &h[r * 3..r * 3 + 3], &c[r * 3..r * 3 + 3])
                .unwrap();
            for (a, b) in hs.iter().chain(&cs).zip(hb[r * 3..r * 3 + 3].iter().chain(&cb[r * 3..r * 3 + 3])) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
