//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable after construction. Each non-leaf tensor records
//! the primitive that produced it together with handles to its inputs, so
//! a scalar loss can replay the graph in reverse construction order and
//! accumulate gradients for every reachable leaf. There is no global tape
//! object: the graph lives in the tensors themselves, and independent
//! graphs on independent threads never interact.

mod backward;
mod gradcheck;
mod kernels;
mod ops;

pub use backward::Gradients;
pub use gradcheck::grad_check;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Epsilon added under the square root in layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Primitive operations recorded in the graph. Attributes that the
/// backward pass needs (dropout masks, slice bounds) live here.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    TransposeLast2,
    Reshape,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    SoftmaxLast,
    Gelu,
    Relu,
    LayerNorm { eps: f64 },
    /// Per-element keep factor: 0 for dropped, 1/(1-rate) for kept.
    Dropout { factors: Arc<Vec<f64>> },
    SumAll,
    MeanAll,
    Mse,
    MeanLastKeep,
    /// Population std over the last axis, floored at `eps`, keepdim.
    StdLastKeep { eps: f64 },
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "subtract",
            Op::Mul => "multiply",
            Op::Div => "divide",
            Op::Scale(_) => "scale",
            Op::TransposeLast2 => "transpose",
            Op::Reshape => "reshape",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::SoftmaxLast => "softmax",
            Op::Gelu => "gelu",
            Op::Relu => "relu",
            Op::LayerNorm { .. } => "layer-norm",
            Op::Dropout { .. } => "dropout",
            Op::SumAll => "sum",
            Op::MeanAll => "mean",
            Op::Mse => "mse",
            Op::MeanLastKeep => "mean-last",
            Op::StdLastKeep { .. } => "std-last",
        }
    }
}

pub(crate) struct OpRecord {
    pub(crate) op: Op,
    pub(crate) inputs: Vec<Tensor>,
}

pub(crate) struct Inner {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) parent: Option<OpRecord>,
}

/// Handle to an immutable tensor value, cheap to clone.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Arc<Inner>,
}

impl Tensor {
    /// Leaf tensor from row-major data.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> crate::Result<Tensor> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(crate::Error::ShapeMismatch {
                op: "from_vec",
                details: format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            });
        }
        Ok(Tensor::leaf(data, shape.to_vec()))
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::leaf(vec![v], vec![1])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::leaf(vec![v; n], shape.to_vec())
    }

    fn leaf(data: Vec<f64>, shape: Vec<usize>) -> Tensor {
        Tensor {
            inner: Arc::new(Inner { id: next_id(), shape, data, parent: None }),
        }
    }

    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op, inputs: Vec<Tensor>) -> Tensor {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Tensor {
            inner: Arc::new(Inner {
                id: next_id(),
                shape,
                data,
                parent: Some(OpRecord { op, inputs }),
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    /// Construction-order identity; later tensors always have larger ids.
    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.parent.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> crate::Result<f64> {
        if self.numel() != 1 {
            return Err(crate::Error::ShapeMismatch {
                op: "item",
                details: format!("expected one element, shape is {:?}", self.shape()),
            });
        }
        Ok(self.inner.data[0])
    }

    /// Same values, detached from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::leaf(self.inner.data.clone(), self.inner.shape.clone())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(6).copied().collect();
        write!(
            f,
            "Tensor(id={}, shape={:?}, data≈{:?}{})",
            self.id(),
            self.shape(),
            preview,
            if self.numel() > 6 { ", …" } else { "" }
        )
    }
}
