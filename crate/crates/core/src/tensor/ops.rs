//! Forward implementations of the primitive set.
//!
//! Binary elementwise ops accept a right-hand side that broadcasts to the
//! left-hand shape (trailing-aligned, extents equal or 1) — exactly what
//! linear biases and per-channel affine parameters need, nothing more.

use std::sync::Arc;

use super::kernels::{broadcast_ok, mm_nn, zip_broadcast};
use super::{Op, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

fn shape_err(op: &'static str, details: String) -> Error {
    Error::ShapeMismatch { op, details }
}

impl Tensor {
    fn binary(&self, rhs: &Tensor, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if !broadcast_ok(self.shape(), rhs.shape()) {
            return Err(shape_err(
                op.name(),
                format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![0.0; a.len()];
        zip_broadcast(self.shape(), rhs.shape(), |li, ri| {
            out[li] = f(a[li], b[ri]);
        });
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            op,
            vec![self.clone(), rhs.clone()],
        ))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Op::Sub, |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Op::Mul, |a, b| a * b)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Op::Div, |a, b| a / b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op(out, self.shape().to_vec(), Op::Scale(c), vec![self.clone()])
    }

    /// Matrix product over the last two axes. The right-hand side is either
    /// a plain matrix (shared across all leading batch dims of the left) or
    /// a batched operand with identical leading dims.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let a = self.shape();
        let b = rhs.shape();
        if a.len() < 2 || b.len() < 2 {
            return Err(shape_err("matmul", format!("needs ≥2 axes: {:?} vs {:?}", a, b)));
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (bk, n) = (b[b.len() - 2], b[b.len() - 1]);
        let lead = &a[..a.len() - 2];
        let rhs_batched = b.len() > 2;
        if bk != k || (rhs_batched && &b[..b.len() - 2] != lead) {
            return Err(shape_err(
                "matmul",
                format!("inner extents differ: {:?} vs {:?}", a, b),
            ));
        }
        let batches: usize = lead.iter().product();
        let mut out = vec![0.0; batches * m * n];
        let a_data = self.data();
        let b_data = rhs.data();
        for t in 0..batches {
            let a_block = &a_data[t * m * k..(t + 1) * m * k];
            let b_block = if rhs_batched {
                &b_data[t * k * n..(t + 1) * k * n]
            } else {
                b_data
            };
            mm_nn(a_block, b_block, m, k, n, &mut out[t * m * n..(t + 1) * m * n]);
        }
        let mut shape = lead.to_vec();
        shape.push(m);
        shape.push(n);
        Ok(Tensor::from_op(out, shape, Op::MatMul, vec![self.clone(), rhs.clone()]))
    }

    /// Swap the last two axes.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() < 2 {
            return Err(shape_err("transpose", format!("needs ≥2 axes: {:?}", s)));
        }
        let (m, n) = (s[s.len() - 2], s[s.len() - 1]);
        let batches: usize = s[..s.len() - 2].iter().product();
        let data = self.data();
        let mut out = vec![0.0; data.len()];
        for t in 0..batches {
            let src = &data[t * m * n..(t + 1) * m * n];
            let dst = &mut out[t * m * n..(t + 1) * m * n];
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        let mut shape = s.to_vec();
        let l = shape.len();
        shape.swap(l - 2, l - 1);
        Ok(Tensor::from_op(out, shape, Op::TransposeLast2, vec![self.clone()]))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != self.numel() {
            return Err(shape_err(
                "reshape",
                format!("{:?} ({} values) cannot become {:?}", self.shape(), self.numel(), shape),
            ));
        }
        Ok(Tensor::from_op(
            self.data().to_vec(),
            shape.to_vec(),
            Op::Reshape,
            vec![self.clone()],
        ))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs".into()))?;
        let nd = first.shape().len();
        if axis >= nd {
            return Err(shape_err("concat", format!("axis {} out of range for {:?}", axis, first.shape())));
        }
        let mut axis_total = 0;
        for p in parts {
            if p.shape().len() != nd
                || p.shape()[..axis] != first.shape()[..axis]
                || p.shape()[axis + 1..] != first.shape()[axis + 1..]
            {
                return Err(shape_err(
                    "concat",
                    format!("{:?} incompatible with {:?} on axis {}", p.shape(), first.shape(), axis),
                ));
            }
            axis_total += p.shape()[axis];
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let mut shape = first.shape().to_vec();
        shape[axis] = axis_total;
        let mut out = vec![0.0; outer * axis_total * inner];
        let mut offset = 0;
        for p in parts {
            let block = p.shape()[axis] * inner;
            let data = p.data();
            for o in 0..outer {
                let dst = o * axis_total * inner + offset;
                out[dst..dst + block].copy_from_slice(&data[o * block..(o + 1) * block]);
            }
            offset += block;
        }
        Ok(Tensor::from_op(out, shape, Op::Concat { axis }, parts.to_vec()))
    }

    /// Contiguous range [start, end) along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        let s = self.shape();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(shape_err(
                "slice",
                format!("[{}, {}) on axis {} of {:?}", start, end, axis, s),
            ));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let width = end - start;
        let mut out = vec![0.0; outer * width * inner];
        let data = self.data();
        for o in 0..outer {
            let src = o * s[axis] * inner + start * inner;
            let dst = o * width * inner;
            out[dst..dst + width * inner].copy_from_slice(&data[src..src + width * inner]);
        }
        let mut shape = s.to_vec();
        shape[axis] = width;
        Ok(Tensor::from_op(out, shape, Op::Slice { axis, start, end }, vec![self.clone()]))
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_last(&self) -> Result<Tensor> {
        let s = self.shape();
        let d = *s.last().ok_or_else(|| shape_err("softmax", "scalar input".into()))?;
        let data = self.data();
        let mut out = vec![0.0; data.len()];
        for row in 0..data.len() / d {
            let src = &data[row * d..(row + 1) * d];
            let dst = &mut out[row * d..(row + 1) * d];
            let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &x) in dst.iter_mut().zip(src) {
                *o = (x - max).exp();
                z += *o;
            }
            for o in dst.iter_mut() {
                *o /= z;
            }
        }
        Ok(Tensor::from_op(out, s.to_vec(), Op::SoftmaxLast, vec![self.clone()]))
    }

    /// GELU in its tanh form.
    pub fn gelu(&self) -> Tensor {
        let out = self.data().iter().map(|&x| gelu_value(x)).collect();
        Tensor::from_op(out, self.shape().to_vec(), Op::Gelu, vec![self.clone()])
    }

    pub fn relu(&self) -> Tensor {
        let out = self.data().iter().map(|&x| x.max(0.0)).collect();
        Tensor::from_op(out, self.shape().to_vec(), Op::Relu, vec![self.clone()])
    }

    /// Layer normalization over the last axis with learnable gain and bias.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let s = self.shape();
        let d = *s.last().ok_or_else(|| shape_err("layer-norm", "scalar input".into()))?;
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(shape_err(
                "layer-norm",
                format!(
                    "gain {:?} / bias {:?} must both be [{}] for input {:?}",
                    gain.shape(),
                    bias.shape(),
                    d,
                    s
                ),
            ));
        }
        let eps = super::LAYER_NORM_EPS;
        let data = self.data();
        let g = gain.data();
        let b = bias.data();
        let mut out = vec![0.0; data.len()];
        for row in 0..data.len() / d {
            let src = &data[row * d..(row + 1) * d];
            let dst = &mut out[row * d..(row + 1) * d];
            let mean = src.iter().sum::<f64>() / d as f64;
            let var = src.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                dst[j] = g[j] * (src[j] - mean) * inv + b[j];
            }
        }
        Ok(Tensor::from_op(
            out,
            s.to_vec(),
            Op::LayerNorm { eps },
            vec![self.clone(), gain.clone(), bias.clone()],
        ))
    }

    /// Inverted dropout: kept activations are rescaled by 1/(1-rate) so
    /// evaluation needs no adjustment. Rate 0 is the identity.
    pub fn dropout(&self, rate: f64, rng: &mut Rng) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidDropoutRate(rate));
        }
        if rate == 0.0 {
            return Ok(self.clone());
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let factors: Vec<f64> = self
            .data()
            .iter()
            .map(|_| if rng.happens(rate) { 0.0 } else { keep_scale })
            .collect();
        let out = self.data().iter().zip(&factors).map(|(&x, &f)| x * f).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            Op::Dropout { factors: Arc::new(factors) },
            vec![self.clone()],
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(vec![s], vec![1], Op::SumAll, vec![self.clone()])
    }

    pub fn mean_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel().max(1) as f64;
        Tensor::from_op(vec![s / n], vec![1], Op::MeanAll, vec![self.clone()])
    }

    /// Mean squared error over all elements; shapes must match exactly.
    pub fn mse(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(shape_err(
                "mse",
                format!("{:?} vs {:?}", self.shape(), target.shape()),
            ));
        }
        let n = self.numel().max(1) as f64;
        let s: f64 = self
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        Ok(Tensor::from_op(
            vec![s / n],
            vec![1],
            Op::Mse,
            vec![self.clone(), target.clone()],
        ))
    }

    /// Mean over the last axis, keeping it as extent 1.
    pub fn mean_last_keepdim(&self) -> Result<Tensor> {
        let s = self.shape();
        let d = *s.last().ok_or_else(|| shape_err("mean-last", "scalar input".into()))?;
        let data = self.data();
        let rows = data.len() / d;
        let mut out = vec![0.0; rows];
        for row in 0..rows {
            out[row] = data[row * d..(row + 1) * d].iter().sum::<f64>() / d as f64;
        }
        let mut shape = s.to_vec();
        *shape.last_mut().unwrap() = 1;
        Ok(Tensor::from_op(out, shape, Op::MeanLastKeep, vec![self.clone()]))
    }

    /// Population standard deviation over the last axis, floored at `eps`,
    /// keeping the axis as extent 1.
    pub fn std_last_keepdim(&self, eps: f64) -> Result<Tensor> {
        let s = self.shape();
        let d = *s.last().ok_or_else(|| shape_err("std-last", "scalar input".into()))?;
        let data = self.data();
        let rows = data.len() / d;
        let mut out = vec![0.0; rows];
        for row in 0..rows {
            let src = &data[row * d..(row + 1) * d];
            let mean = src.iter().sum::<f64>() / d as f64;
            let var = src.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            out[row] = var.sqrt().max(eps);
        }
        let mut shape = s.to_vec();
        *shape.last_mut().unwrap() = 1;
        Ok(Tensor::from_op(out, shape, Op::StdLastKeep { eps }, vec![self.clone()]))
    }
}

pub(crate) fn gelu_value(x: f64) -> f64 {
    0.5 * x * (1.0 + gelu_inner(x).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = gelu_inner(x).tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
const GELU_CUBIC: f64 = 0.044715;

fn gelu_inner(x: f64) -> f64 {
    SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)
}
