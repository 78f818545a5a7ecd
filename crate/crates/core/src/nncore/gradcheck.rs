use crate::error::{Error, Result};

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// `|a - n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares `analytic` against central differences of `f` at `params` and
/// returns the largest relative error over all coordinates.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Param(format!("finite-difference eps must be > 0, got {eps}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Param(format!("objective is not finite at coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let err = grad_check(|w| w[0] * w[0], &[3.0], &[6.0], 1e-5).unwrap();
        assert!(err < 1e-8);
    }

    #[test]
    fn constant() {
        let err = grad_check(|_| 4.0, &[1.0, 2.0], &[0.0, 0.0], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let err = grad_check(|w| w[0] * w[0], &[3.0], &[5.0], 1e-5).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(grad_check(|w| w[0].ln(), &[0.0], &[0.0], 1e-5).is_err());
        assert!(grad_check(|w| w[0], &[0.0], &[1.0], 0.0).is_err());
    }
}
