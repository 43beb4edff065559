//! Central finite-difference verification of analytic gradients.

use super::Tensor;
use crate::{Error, Result};

/// Compares the analytic gradient of `f` at `x` against central finite
/// differences and returns the max relative error over components:
/// |analytic − numeric| / max(|analytic|, |numeric|, 1e-8).
///
/// `f` must be deterministic (run dropout with a fixed seed or not at all).
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if eps <= 0.0 {
        return Err(Error::Config(format!("grad_check eps must be positive, got {}", eps)));
    }
    let base = x.detach();
    let loss = f(&base)?;
    let analytic: Vec<f64> = match loss.backward()?.wrt(&base) {
        Some(g) => g.to_vec(),
        None => vec![0.0; base.numel()],
    };

    let mut max_err = 0.0f64;
    let data = base.data();
    for i in 0..base.numel() {
        let mut plus = data.to_vec();
        let mut minus = data.to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let f_plus = f(&Tensor::from_vec(plus, base.shape())?)?.item()?;
        let f_minus = f(&Tensor::from_vec(minus, base.shape())?)?.item()?;
        let numeric = (f_plus - f_minus) / (2.0 * eps);
        let a = analytic[i];
        if !a.is_finite() || !numeric.is_finite() {
            return Err(Error::NonFinite(format!(
                "grad_check component {}: analytic {}, numeric {}",
                i, a, numeric
            )));
        }
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
