use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{ParamId, ParamStore, Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Operation families, used for gradient-check reporting and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Param,
    Add,
    Sub,
    Mul,
    Scale,
    AddBias,
    MatMul,
    Relu,
    Sigmoid,
    Log,
    Softmax,
    LayerNorm,
    BatchNorm,
    AvgPool,
    Mean,
    Sum,
    Embedding,
    Dropout,
    Conv2d,
    Attention,
    Reshape,
    Transpose,
    Narrow,
    CrossEntropy,
    Bce,
}

impl OpKind {
    pub const ALL: [OpKind; 26] = [
        OpKind::Leaf,
        OpKind::Param,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::AddBias,
        OpKind::MatMul,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::Log,
        OpKind::Softmax,
        OpKind::LayerNorm,
        OpKind::BatchNorm,
        OpKind::AvgPool,
        OpKind::Mean,
        OpKind::Sum,
        OpKind::Embedding,
        OpKind::Dropout,
        OpKind::Conv2d,
        OpKind::Attention,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::Narrow,
        OpKind::CrossEntropy,
        OpKind::Bce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Param => "param",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddBias => "add_bias",
            OpKind::MatMul => "matmul",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Log => "log",
            OpKind::Softmax => "softmax",
            OpKind::LayerNorm => "layer_norm",
            OpKind::BatchNorm => "batch_norm",
            OpKind::AvgPool => "avg_pool",
            OpKind::Mean => "global_mean",
            OpKind::Sum => "sum",
            OpKind::Embedding => "embedding",
            OpKind::Dropout => "dropout",
            OpKind::Conv2d => "conv2d",
            OpKind::Attention => "attention",
            OpKind::Reshape => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::Narrow => "narrow",
            OpKind::CrossEntropy => "cross_entropy",
            OpKind::Bce => "bce",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Boolean `[rows × cols]` visibility mask; `true` marks an allowed position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttnMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttnMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        AttnMask {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    /// Position `i` sees positions `0..=i`.
    pub fn causal(n: usize) -> Self {
        let mut allowed = vec![false; n * n];
        for i in 0..n {
            for j in 0..=i {
                allowed[i * n + j] = true;
            }
        }
        AttnMask {
            rows: n,
            cols: n,
            allowed,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                allowed.push(f(i, j));
            }
        }
        AttnMask {
            rows,
            cols,
            allowed,
        }
    }

    /// Hides every key column whose `keep` flag is false.
    pub fn with_key_padding(mut self, keep: &[bool]) -> Self {
        for i in 0..self.rows {
            for (j, &k) in keep.iter().enumerate().take(self.cols) {
                if !k {
                    self.allowed[i * self.cols + j] = false;
                }
            }
        }
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }
}

/// Saved state for the backward pass of each recorded operation.
pub(crate) enum Op<T> {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    AvgPool(Var),
    Mean {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Sum {
        x: Var,
        factor: T,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Conv2d(Var, Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<T>,
    },
    Reshape(Var),
    Transpose(Var),
    Narrow {
        x: Var,
        offset: usize,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        active: Vec<bool>,
        probs: Vec<T>,
        count: usize,
    },
    Bce {
        logits: Var,
        targets: Vec<T>,
        probs: Vec<T>,
    },
}

impl<T> Op<T> {
    pub(crate) fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Param(_) => OpKind::Param,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddBias(..) => OpKind::AddBias,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Log(_) => OpKind::Log,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::AvgPool(_) => OpKind::AvgPool,
            Op::Mean { .. } => OpKind::Mean,
            Op::Sum { .. } => OpKind::Sum,
            Op::Embedding { .. } => OpKind::Embedding,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::Conv2d(..) => OpKind::Conv2d,
            Op::Attention { .. } => OpKind::Attention,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Narrow { .. } => OpKind::Narrow,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::Bce { .. } => OpKind::Bce,
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Records the forward computation and replays it in reverse to produce
/// parameter gradients. A tape supports exactly one backward pass.
pub struct Tape<T: Real> {
    pub(crate) nodes: Vec<Node<T>>,
    training: bool,
    param_vars: HashMap<ParamId, Var>,
    buffer_updates: Vec<(ParamId, Tensor<T>)>,
    pub(crate) fault: Option<OpKind>,
    consumed: bool,
}

impl<T: Real> Tape<T> {
    /// `training` selects batch statistics in batch norm and enables dropout.
    pub fn new(training: bool) -> Self {
        Tape {
            nodes: Vec::new(),
            training,
            param_vars: HashMap::new(),
            buffer_updates: Vec::new(),
            fault: None,
            consumed: false,
        }
    }

    pub fn training(&self) -> bool {
        self.training
    }

    /// Corrupts the backward rule of one operation family. Used to prove
    /// that gradient checks catch broken adjoints.
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param(_) => true,
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// Records a parameter. Repeated calls within one tape return the same handle.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), &[]);
        self.param_vars.insert(id, v);
        v
    }

    pub(crate) fn schedule_buffer_update(&mut self, id: ParamId, value: Tensor<T>) {
        self.buffer_updates.push((id, value));
    }

    /// Writes batch-norm running statistics gathered during a training
    /// forward pass into the store.
    pub fn apply_buffer_updates(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        for (id, value) in self.buffer_updates.drain(..) {
            store.set_value(id, value)?;
        }
        Ok(())
    }

    /// Computes `∂loss/∂p` for every parameter in `store`, overwriting
    /// previous gradients. Parameters not reachable from `loss` get zeros.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.consumed {
            return Err(Error::Contract("tape already consumed by a backward pass".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        store.zero_grad();
        super::backward::run(self, loss, store)
    }
}
