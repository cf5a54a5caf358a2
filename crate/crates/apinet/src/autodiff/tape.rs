//! Wengert tape for reverse-mode differentiation.
//!
//! Forward calls on [`Tape`] record one node per operation, caching the
//! forward value. [`Tape::backward`] replays the tape in reverse, applying
//! each operation's adjoint rule, and collects gradients for every bound
//! parameter. Node ids strictly increase in forward order, so the recorded
//! graph is a DAG by construction.
//!
//! One tape is built per pair forward during training; tapes are never
//! shared across threads.

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Index of a node on the tape.
pub type NodeId = usize;

/// Index of a trainable parameter within a model's flat parameter list.
pub type ParamId = usize;

/// Recorded operation. Holds input node ids plus any constants the backward
/// rule needs; forward values live on the nodes themselves.
#[derive(Debug, Clone)]
enum Op {
    /// Input leaf (data or constant); receives no gradient output.
    Leaf,
    /// Parameter leaf bound to a [`ParamId`].
    Param(ParamId),
    Add(NodeId, NodeId),
    /// Sum of several same-shaped nodes.
    AddN(Vec<NodeId>),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Matvec(NodeId, NodeId),
    Concat(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    /// Scalar `log(sum(exp(v)))`.
    LogSumExp(NodeId),
    /// Scalar `v[idx]`.
    Pick(NodeId, usize),
    /// Constant multiple `c * x`.
    Scale(NodeId, f64),
    /// Constant shift `x + c`; the adjoint passes through unchanged, so
    /// the constant is not recorded.
    AddConst(NodeId),
    /// Product of a scalar node and a tensor node.
    ScalarMul(NodeId, NodeId),
    /// Scalar sum of all entries.
    Sum(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients keyed by parameter id; every bound parameter has an entry of
/// the parameter's shape.
#[derive(Debug, Clone)]
pub struct GradMap {
    grads: Vec<Tensor>,
}

impl GradMap {
    pub fn zeros_like(shapes: &[&Tensor]) -> Self {
        GradMap {
            grads: shapes.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// Wrap explicit per-parameter gradients (mainly for tests and
    /// hand-built references).
    pub fn from_tensors(grads: Vec<Tensor>) -> Self {
        GradMap { grads }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    /// In-place `self += scale * other`, entry by entry.
    pub fn accumulate(&mut self, scale: f64, other: &GradMap) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::contract(format!(
                "gradient maps of different sizes: {} vs {}",
                self.grads.len(),
                other.grads.len()
            )));
        }
        for (g, o) in self.grads.iter_mut().zip(other.grads.iter()) {
            g.axpy(scale, o)?;
        }
        Ok(())
    }

    /// Multiply every entry by a constant.
    pub fn scale(&mut self, c: f64) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= c;
            }
        }
    }
}

/// Recording tape. All builder methods run the forward computation
/// immediately and cache the result.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { op, value });
        id
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Input leaf that wants no gradient.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Parameter leaf; its gradient lands in the [`GradMap`] under `pid`.
    pub fn param(&mut self, value: Tensor, pid: ParamId) -> NodeId {
        self.push(Op::Param(pid), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn add_n(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        let Some((&first, rest)) = ids.split_first() else {
            return Err(Error::contract("add_n of no nodes"));
        };
        let mut v = self.value(first).clone();
        for &id in rest {
            v = tensor::add(&v, self.value(id))?;
        }
        Ok(self.push(Op::AddN(ids.to_vec()), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::sub(self.value(a), self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::hadamard(self.value(a), self.value(b))?;
        Ok(self.push(Op::Hadamard(a, b), v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        let v = tensor::matvec(self.value(a), self.value(x))?;
        Ok(self.push(Op::Matvec(a, x), v))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::concat(self.value(a), self.value(b))?;
        Ok(self.push(Op::Concat(a, b), v))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = tensor::relu(self.value(a));
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = tensor::sigmoid(self.value(a));
        self.push(Op::Sigmoid(a), v)
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::softmax(self.value(a))?;
        Ok(self.push(Op::Softmax(a), v))
    }

    pub fn log_sum_exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::log_sum_exp(self.value(a))?;
        Ok(self.push(Op::LogSumExp(a), Tensor::scalar(v)))
    }

    pub fn pick(&mut self, a: NodeId, idx: usize) -> Result<NodeId> {
        let v = tensor::pick(self.value(a), idx)?;
        Ok(self.push(Op::Pick(a, idx), Tensor::scalar(v)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = tensor::scale(self.value(a), c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = tensor::add_const(self.value(a), c);
        self.push(Op::AddConst(a), v)
    }

    pub fn scalar_mul(&mut self, s: NodeId, v: NodeId) -> Result<NodeId> {
        let sv = self.value(s).scalar_value()?;
        let out = tensor::scale(self.value(v), sv);
        Ok(self.push(Op::ScalarMul(s, v), out))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = tensor::sum_all(self.value(a));
        self.push(Op::Sum(a), Tensor::scalar(v))
    }

    /// Reverse sweep from a scalar loss node. Returns gradients for all
    /// parameters bound on this tape; `n_params` fixes the map size, and a
    /// parameter never touched by the graph gets a zero gradient only if it
    /// was bound, otherwise the call is rejected.
    pub fn backward(&self, loss: NodeId, n_params: usize) -> Result<GradMap> {
        if loss >= self.nodes.len() {
            return Err(Error::contract(format!("loss node {loss} not on tape")));
        }
        if !self.nodes[loss].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }

        let mut adjoints: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss] = Some(Tensor::scalar(1.0));

        for id in (0..=loss).rev() {
            let Some(grad) = adjoints[id].take() else {
                continue;
            };
            self.propagate(id, &grad, &mut adjoints)?;
            // Re-store for parameter collection below.
            adjoints[id] = Some(grad);
        }

        let mut grads: Vec<Option<Tensor>> = (0..n_params).map(|_| None).collect();
        for (node, rec) in self.nodes.iter().enumerate() {
            let Op::Param(pid) = &rec.op else {
                continue;
            };
            let pid = *pid;
            if pid >= n_params {
                return Err(Error::contract(format!(
                    "bound parameter id {pid} outside expected range {n_params}"
                )));
            }
            let g = adjoints[node]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(rec.value.shape()));
            grads[pid] = Some(g);
        }
        let grads: Vec<Tensor> = grads
            .into_iter()
            .enumerate()
            .map(|(pid, g)| g.ok_or_else(|| Error::contract(format!("parameter {pid} not bound on tape"))))
            .collect::<Result<_>>()?;
        Ok(GradMap { grads })
    }

    fn accumulate(adjoints: &mut [Option<Tensor>], id: NodeId, delta: &Tensor) -> Result<()> {
        match &mut adjoints[id] {
            Some(acc) => acc.axpy(1.0, delta),
            slot @ None => {
                *slot = Some(delta.clone());
                Ok(())
            }
        }
    }

    /// Apply one node's adjoint rule, pushing contributions into its inputs.
    fn propagate(&self, id: NodeId, grad: &Tensor, adjoints: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf | Op::Param(_) => Ok(()),
            Op::Add(a, b) => {
                Self::accumulate(adjoints, *a, grad)?;
                Self::accumulate(adjoints, *b, grad)
            }
            Op::AddN(ids) => {
                for &i in ids {
                    Self::accumulate(adjoints, i, grad)?;
                }
                Ok(())
            }
            Op::Sub(a, b) => {
                Self::accumulate(adjoints, *a, grad)?;
                Self::accumulate(adjoints, *b, &tensor::scale(grad, -1.0))
            }
            Op::Hadamard(a, b) => {
                let da = tensor::hadamard(grad, self.value(*b))?;
                let db = tensor::hadamard(grad, self.value(*a))?;
                Self::accumulate(adjoints, *a, &da)?;
                Self::accumulate(adjoints, *b, &db)
            }
            Op::Matmul(a, b) => {
                let bt = tensor::transpose(self.value(*b))?;
                let at = tensor::transpose(self.value(*a))?;
                let da = tensor::matmul(grad, &bt)?;
                let db = tensor::matmul(&at, grad)?;
                Self::accumulate(adjoints, *a, &da)?;
                Self::accumulate(adjoints, *b, &db)
            }
            Op::Matvec(a, x) => {
                let da = tensor::outer(grad, self.value(*x))?;
                let dx = tensor::matvec_t(self.value(*a), grad)?;
                Self::accumulate(adjoints, *a, &da)?;
                Self::accumulate(adjoints, *x, &dx)
            }
            Op::Concat(a, b) => {
                let p = self.value(*a).numel();
                let (left, right) = grad.data().split_at(p);
                Self::accumulate(adjoints, *a, &Tensor::vector(left.to_vec()))?;
                Self::accumulate(adjoints, *b, &Tensor::vector(right.to_vec()))
            }
            Op::Relu(a) => {
                // Subgradient at exactly 0 is 0: gate on output > 0.
                let out = self.value(id);
                let mut d = grad.clone();
                for (g, &o) in d.data_mut().iter_mut().zip(out.data()) {
                    if o <= 0.0 {
                        *g = 0.0;
                    }
                }
                Self::accumulate(adjoints, *a, &d)
            }
            Op::Sigmoid(a) => {
                let out = self.value(id);
                let mut d = grad.clone();
                for (g, &s) in d.data_mut().iter_mut().zip(out.data()) {
                    *g *= s * (1.0 - s);
                }
                Self::accumulate(adjoints, *a, &d)
            }
            Op::Softmax(a) => {
                let p = self.value(id);
                let dot: f64 = grad.data().iter().zip(p.data()).map(|(g, q)| g * q).sum();
                let mut d = grad.clone();
                for (g, &q) in d.data_mut().iter_mut().zip(p.data()) {
                    *g = q * (*g - dot);
                }
                Self::accumulate(adjoints, *a, &d)
            }
            Op::LogSumExp(a) => {
                let g = grad.scalar_value()?;
                let soft = tensor::softmax(self.value(*a))?;
                Self::accumulate(adjoints, *a, &tensor::scale(&soft, g))
            }
            Op::Pick(a, idx) => {
                let g = grad.scalar_value()?;
                let mut d = Tensor::zeros(self.value(*a).shape());
                d.data_mut()[*idx] = g;
                Self::accumulate(adjoints, *a, &d)
            }
            Op::Scale(a, c) => Self::accumulate(adjoints, *a, &tensor::scale(grad, *c)),
            Op::AddConst(a) => Self::accumulate(adjoints, *a, grad),
            Op::ScalarMul(s, v) => {
                let sv = self.value(*s).scalar_value()?;
                let ds: f64 = grad
                    .data()
                    .iter()
                    .zip(self.value(*v).data())
                    .map(|(g, x)| g * x)
                    .sum();
                Self::accumulate(adjoints, *s, &Tensor::scalar(ds))?;
                Self::accumulate(adjoints, *v, &tensor::scale(grad, sv))
            }
            Op::Sum(a) => {
                let g = grad.scalar_value()?;
                let mut d = Tensor::zeros(self.value(*a).shape());
                for x in d.data_mut() {
                    *x = g;
                }
                Self::accumulate(adjoints, *a, &d)
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
