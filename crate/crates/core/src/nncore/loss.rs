use crate::error::{Error, Result};

/// Floor added inside the log of the cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// Max-subtracted softmax. Panics on an empty slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    assert!(!v.is_empty(), "softmax of an empty vector");
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn check_target(probs: &[f64], target: usize) -> Result<()> {
    if target >= probs.len() {
        return Err(Error::Index {
            index: target,
            size: probs.len(),
        });
    }
    Ok(())
}

/// `-ln(p[target] + 1e-12)`.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64> {
    check_target(probs, target)?;
    Ok(-(probs[target] + LOG_FLOOR).ln())
}

/// Gradient of the cross-entropy with respect to the logits that produced
/// `probs`: `probs - onehot(target)`.
pub fn cross_entropy_grad(probs: &[f64], target: usize) -> Result<Vec<f64>> {
    check_target(probs, target)?;
    let mut g = probs.to_vec();
    g[target] -= 1.0;
    Ok(g)
}
