//! Reversible per-instance, per-channel normalization.
//!
//! Statistics are taken over the lookback axis only and retained so the
//! prediction can be mapped back to the input scale. Gradients flow
//! through the statistics and through the optional learnable affine pair.

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Floor applied to the per-instance standard deviation.
pub const REVIN_EPS: f64 = 1e-5;

/// Learnable per-channel affine; `None` fields mean the affine stage is
/// disabled and normalization is a pure standardization.
#[derive(Debug, Clone)]
pub struct RevinParams {
    pub gain: Option<Tensor>,
    pub bias: Option<Tensor>,
}

impl RevinParams {
    pub fn new(n_channels: usize, affine: bool) -> RevinParams {
        if affine {
            RevinParams {
                gain: Some(Tensor::ones(&[n_channels])),
                bias: Some(Tensor::zeros(&[n_channels])),
            }
        } else {
            RevinParams { gain: None, bias: None }
        }
    }

    pub fn affine(&self) -> bool {
        self.gain.is_some()
    }
}

/// Lookback statistics captured by `normalize`, consumed by `denormalize`.
pub struct RevinState {
    /// B×C×1 lookback means.
    pub mean: Tensor,
    /// B×C×1 lookback standard deviations, floored at `REVIN_EPS`.
    pub std: Tensor,
}

/// Standardizes each (instance, channel) lookback vector, then applies the
/// learnable affine when enabled. Input B×C×L.
pub fn normalize(x: &Tensor, params: &RevinParams) -> Result<(Tensor, RevinState)> {
    if x.shape().len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "revin-normalize",
            details: format!("expected B×C×L, got {:?}", x.shape()),
        });
    }
    let mean = x.mean_last_keepdim()?;
    let std = x.std_last_keepdim(REVIN_EPS)?;
    let mut out = x.sub(&mean)?.div(&std)?;
    if let (Some(gain), Some(bias)) = (&params.gain, &params.bias) {
        let c = x.shape()[1];
        out = out.mul(&gain.reshape(&[c, 1])?)?.add(&bias.reshape(&[c, 1])?)?;
    }
    Ok((out, RevinState { mean, std }))
}

/// Inverts the affine then restores the lookback statistics. Prediction
/// B×C×H must match the batch and channel extents of the state.
pub fn denormalize(pred: &Tensor, state: &RevinState, params: &RevinParams) -> Result<Tensor> {
    if pred.shape().len() != 3
        || pred.shape()[0] != state.mean.shape()[0]
        || pred.shape()[1] != state.mean.shape()[1]
    {
        return Err(Error::ShapeMismatch {
            op: "revin-denormalize",
            details: format!(
                "prediction {:?} does not match state {:?}",
                pred.shape(),
                state.mean.shape()
            ),
        });
    }
    let mut out = pred.clone();
    if let (Some(gain), Some(bias)) = (&params.gain, &params.bias) {
        let c = pred.shape()[1];
        out = out.sub(&bias.reshape(&[c, 1])?)?.div(&gain.reshape(&[c, 1])?)?;
    }
    out.mul(&state.std)?.add(&state.mean)
}
