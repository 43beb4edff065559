//! Reverse-mode differentiation over the recorded graph.
//!
//! Nodes are replayed in reverse construction order (ids are monotone, so
//! sorting by id descending is a valid topological order), accumulating
//! vector-Jacobian products into a per-tensor gradient map.

use std::collections::{HashMap, HashSet};

use super::kernels::{mm_nt, mm_tn, zip_broadcast};
use super::ops::gelu_grad;
use super::{Op, Tensor};
use crate::{Error, Result};

/// Gradients of one scalar loss with respect to every reachable tensor.
pub struct Gradients {
    grads: HashMap<u64, Vec<f64>>,
}

impl Gradients {
    /// dLoss/dTensor, if the tensor was reachable from the loss.
    pub fn wrt(&self, t: &Tensor) -> Option<&[f64]> {
        self.grads.get(&t.id()).map(|v| v.as_slice())
    }
}

impl Tensor {
    /// Gradient of this scalar with respect to every reachable tensor.
    pub fn backward(&self) -> Result<Gradients> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        // Collect the reachable subgraph without recursion.
        let mut seen: HashSet<u64> = HashSet::new();
        let mut nodes: Vec<Tensor> = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if let Some(rec) = &t.inner.parent {
                for input in &rec.inputs {
                    stack.push(input.clone());
                }
            }
            nodes.push(t);
        }
        nodes.sort_by_key(|t| std::cmp::Reverse(t.id()));

        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);
        for node in &nodes {
            let rec = match &node.inner.parent {
                Some(rec) => rec,
                None => continue,
            };
            let g = match grads.get(&node.id()) {
                Some(g) => g.clone(),
                None => continue,
            };
            let input_grads = propagate(node, rec, &g);
            for (input, ig) in rec.inputs.iter().zip(input_grads) {
                match grads.get_mut(&input.id()) {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&ig) {
                            *a += v;
                        }
                    }
                    None => {
                        grads.insert(input.id(), ig);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Vector-Jacobian product of one node: gradient w.r.t. each input,
/// aligned with the recorded input order.
fn propagate(out: &Tensor, rec: &super::OpRecord, g: &[f64]) -> Vec<Vec<f64>> {
    let inputs = &rec.inputs;
    match &rec.op {
        Op::MatMul => {
            let a = &inputs[0];
            let b = &inputs[1];
            let ash = a.shape();
            let bsh = b.shape();
            let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
            let n = bsh[bsh.len() - 1];
            let batches: usize = ash[..ash.len() - 2].iter().product();
            let rhs_batched = bsh.len() > 2;
            let mut da = vec![0.0; a.numel()];
            let mut db = vec![0.0; b.numel()];
            for t in 0..batches {
                let g_block = &g[t * m * n..(t + 1) * m * n];
                let a_block = &a.data()[t * m * k..(t + 1) * m * k];
                let b_block = if rhs_batched {
                    &b.data()[t * k * n..(t + 1) * k * n]
                } else {
                    b.data()
                };
                // dA = g @ Bᵀ
                mm_nt(g_block, b_block, m, n, k, &mut da[t * m * k..(t + 1) * m * k]);
                // dB = Aᵀ @ g, accumulated across the batch when B is shared
                let db_block = if rhs_batched {
                    &mut db[t * k * n..(t + 1) * k * n]
                } else {
                    &mut db[..]
                };
                mm_tn(a_block, g_block, m, k, n, db_block);
            }
            vec![da, db]
        }
        Op::Add => {
            let db = reduce_to(inputs[0].shape(), inputs[1].shape(), |li| g[li]);
            vec![g.to_vec(), db]
        }
        Op::Sub => {
            let db = reduce_to(inputs[0].shape(), inputs[1].shape(), |li| -g[li]);
            vec![g.to_vec(), db]
        }
        Op::Mul => {
            let a = inputs[0].data();
            let b = inputs[1].data();
            let mut da = vec![0.0; a.len()];
            let mut db = vec![0.0; b.len()];
            zip_broadcast(inputs[0].shape(), inputs[1].shape(), |li, ri| {
                da[li] = g[li] * b[ri];
                db[ri] += g[li] * a[li];
            });
            vec![da, db]
        }
        Op::Div => {
            let a = inputs[0].data();
            let b = inputs[1].data();
            let mut da = vec![0.0; a.len()];
            let mut db = vec![0.0; b.len()];
            zip_broadcast(inputs[0].shape(), inputs[1].shape(), |li, ri| {
                da[li] = g[li] / b[ri];
                db[ri] -= g[li] * a[li] / (b[ri] * b[ri]);
            });
            vec![da, db]
        }
        Op::Scale(c) => vec![g.iter().map(|v| v * c).collect()],
        Op::TransposeLast2 => {
            // out has shape [.., n, m]; route each grad cell back
            let s = out.shape();
            let (n, m) = (s[s.len() - 2], s[s.len() - 1]);
            let batches: usize = s[..s.len() - 2].iter().product();
            let mut dx = vec![0.0; g.len()];
            for t in 0..batches {
                let src = &g[t * m * n..(t + 1) * m * n];
                let dst = &mut dx[t * m * n..(t + 1) * m * n];
                for i in 0..n {
                    for j in 0..m {
                        dst[j * n + i] = src[i * m + j];
                    }
                }
            }
            vec![dx]
        }
        Op::Reshape => vec![g.to_vec()],
        Op::Concat { axis } => {
            let axis = *axis;
            let total_axis = out.shape()[axis];
            let outer: usize = out.shape()[..axis].iter().product();
            let inner: usize = out.shape()[axis + 1..].iter().product();
            let mut offset = 0;
            let mut result = Vec::with_capacity(inputs.len());
            for p in inputs {
                let width = p.shape()[axis];
                let block = width * inner;
                let mut dp = vec![0.0; p.numel()];
                for o in 0..outer {
                    let src = o * total_axis * inner + offset;
                    dp[o * block..(o + 1) * block].copy_from_slice(&g[src..src + block]);
                }
                offset += block;
                result.push(dp);
            }
            result
        }
        Op::Slice { axis, start, end } => {
            let x = &inputs[0];
            let s = x.shape();
            let width = end - start;
            let outer: usize = s[..*axis].iter().product();
            let inner: usize = s[*axis + 1..].iter().product();
            let mut dx = vec![0.0; x.numel()];
            for o in 0..outer {
                let dst = o * s[*axis] * inner + start * inner;
                let src = o * width * inner;
                dx[dst..dst + width * inner].copy_from_slice(&g[src..src + width * inner]);
            }
            vec![dx]
        }
        Op::SoftmaxLast => {
            let s = out.data();
            let d = *out.shape().last().unwrap();
            let mut dx = vec![0.0; s.len()];
            for row in 0..s.len() / d {
                let sr = &s[row * d..(row + 1) * d];
                let gr = &g[row * d..(row + 1) * d];
                let dot: f64 = sr.iter().zip(gr).map(|(&si, &gi)| si * gi).sum();
                for j in 0..d {
                    dx[row * d + j] = sr[j] * (gr[j] - dot);
                }
            }
            vec![dx]
        }
        Op::Gelu => {
            let x = inputs[0].data();
            vec![g.iter().zip(x).map(|(&gi, &xi)| gi * gelu_grad(xi)).collect()]
        }
        Op::Relu => {
            let x = inputs[0].data();
            vec![g
                .iter()
                .zip(x)
                .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                .collect()]
        }
        Op::LayerNorm { eps } => {
            let x = inputs[0].data();
            let gain = inputs[1].data();
            let d = *out.shape().last().unwrap();
            let rows = x.len() / d;
            let mut dx = vec![0.0; x.len()];
            let mut dgain = vec![0.0; d];
            let mut dbias = vec![0.0; d];
            let mut dxhat = vec![0.0; d];
            for row in 0..rows {
                let xr = &x[row * d..(row + 1) * d];
                let gr = &g[row * d..(row + 1) * d];
                let mean = xr.iter().sum::<f64>() / d as f64;
                let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + eps).sqrt();
                let mut mean_dxhat = 0.0;
                let mut mean_dxhat_xhat = 0.0;
                for j in 0..d {
                    let xhat = (xr[j] - mean) * inv;
                    dgain[j] += gr[j] * xhat;
                    dbias[j] += gr[j];
                    dxhat[j] = gr[j] * gain[j];
                    mean_dxhat += dxhat[j];
                    mean_dxhat_xhat += dxhat[j] * xhat;
                }
                mean_dxhat /= d as f64;
                mean_dxhat_xhat /= d as f64;
                for j in 0..d {
                    let xhat = (xr[j] - mean) * inv;
                    dx[row * d + j] = inv * (dxhat[j] - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
            vec![dx, dgain, dbias]
        }
        Op::Dropout { factors } => {
            vec![g.iter().zip(factors.iter()).map(|(&gi, &f)| gi * f).collect()]
        }
        Op::SumAll => vec![vec![g[0]; inputs[0].numel()]],
        Op::MeanAll => {
            let n = inputs[0].numel().max(1) as f64;
            vec![vec![g[0] / n; inputs[0].numel()]]
        }
        Op::Mse => {
            let p = inputs[0].data();
            let t = inputs[1].data();
            let n = p.len().max(1) as f64;
            let c = 2.0 * g[0] / n;
            let dp: Vec<f64> = p.iter().zip(t).map(|(&pi, &ti)| c * (pi - ti)).collect();
            let dt: Vec<f64> = dp.iter().map(|&v| -v).collect();
            vec![dp, dt]
        }
        Op::MeanLastKeep => {
            let x = &inputs[0];
            let d = *x.shape().last().unwrap();
            let rows = x.numel() / d;
            let mut dx = vec![0.0; x.numel()];
            for row in 0..rows {
                let gv = g[row] / d as f64;
                for j in 0..d {
                    dx[row * d + j] = gv;
                }
            }
            vec![dx]
        }
        Op::StdLastKeep { eps } => {
            let x = inputs[0].data();
            let d = *inputs[0].shape().last().unwrap();
            let rows = x.len() / d;
            let mut dx = vec![0.0; x.len()];
            for row in 0..rows {
                let xr = &x[row * d..(row + 1) * d];
                let mean = xr.iter().sum::<f64>() / d as f64;
                let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let raw = var.sqrt();
                // gradient vanishes where the floor is active
                if raw > *eps {
                    let c = g[row] / (d as f64 * raw);
                    for j in 0..d {
                        dx[row * d + j] = c * (xr[j] - mean);
                    }
                }
            }
            vec![dx]
        }
    }
}

fn reduce_to(lhs: &[usize], rhs: &[usize], f: impl Fn(usize) -> f64) -> Vec<f64> {
    let n: usize = rhs.iter().product();
    let mut out = vec![0.0; n];
    zip_broadcast(lhs, rhs, |li, ri| out[ri] += f(li));
    out
}
