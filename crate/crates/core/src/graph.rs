//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is a tape: operations evaluate eagerly and record enough to
//! replay the chain rule backwards. Models build a fresh graph per step,
//! insert their parameters as trainable leaves, compose the loss, and call
//! [`Graph::backward`]. Everything is f64 so analytic gradients can be
//! checked against central finite differences at tight tolerances.

use crate::tensor::Tensor;

pub type NodeId = usize;

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddN(Vec<NodeId>),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Dot(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    SliceRows { input: NodeId, start: usize },
    LookupRow { table: NodeId, row: usize },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Softmax(NodeId),
    Sum(NodeId),
    /// value(scalar) * vector, where scalar is a (1,1) node.
    BroadcastMul { scalar: NodeId, vector: NodeId },
    /// vector / value(scalar), where scalar is a (1,1) node.
    DivByScalar { vector: NodeId, scalar: NodeId },
    /// sum_k weights[k] * items[k].
    WeightedSum { items: Vec<NodeId>, weights: NodeId },
    /// out[ids[k]] += weights[k] over a zero vector of the given size.
    Scatter { weights: NodeId, ids: Vec<usize> },
    /// Identity forward, negation backward.
    GradReverse(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        self.grads.push(None);
        self.nodes.len() - 1
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Value of a (1,1) node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.nodes[id].value;
        assert_eq!(v.shape(), (1, 1), "node is not scalar");
        v.data()[0]
    }

    /// Gradient accumulated by the last `backward` call, if any reached `id`.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id].as_ref()
    }

    /// Trainable leaf: gradients will be accumulated for it.
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, true)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.add(&self.nodes[b].value);
        let ng = self.needs(&[a, b]);
        self.push(Op::Add(a, b), v, ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.sub(&self.nodes[b].value);
        let ng = self.needs(&[a, b]);
        self.push(Op::Sub(a, b), v, ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.mul(&self.nodes[b].value);
        let ng = self.needs(&[a, b]);
        self.push(Op::Mul(a, b), v, ng)
    }

    pub fn add_n(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty());
        let mut v = self.nodes[ids[0]].value.clone();
        for &i in &ids[1..] {
            v.add_assign(&self.nodes[i].value);
        }
        let ng = self.needs(ids);
        self.push(Op::AddN(ids.to_vec()), v, ng)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.nodes[a].value.scale(k);
        let ng = self.needs(&[a]);
        self.push(Op::Scale(a, k), v, ng)
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| x + k);
        let ng = self.needs(&[a]);
        self.push(Op::AddScalar(a), v, ng)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value);
        let ng = self.needs(&[a, b]);
        self.push(Op::Matmul(a, b), v, ng)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.transpose();
        let ng = self.needs(&[a]);
        self.push(Op::Transpose(a), v, ng)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = Tensor::from_vec(1, 1, vec![self.nodes[a].value.dot(&self.nodes[b].value)]);
        let ng = self.needs(&[a, b]);
        self.push(Op::Dot(a, b), v, ng)
    }

    pub fn concat_rows(&mut self, ids: &[NodeId]) -> NodeId {
        let parts: Vec<&Tensor> = ids.iter().map(|&i| &self.nodes[i].value).collect();
        let v = Tensor::concat_rows(&parts);
        let ng = self.needs(ids);
        self.push(Op::ConcatRows(ids.to_vec()), v, ng)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[a].value.slice_rows(start, len);
        let ng = self.needs(&[a]);
        self.push(Op::SliceRows { input: a, start }, v, ng)
    }

    /// Row of a matrix as a column vector (embedding lookup).
    pub fn lookup_row(&mut self, table: NodeId, row: usize) -> NodeId {
        let v = self.nodes[table].value.row_vector(row);
        let ng = self.needs(&[table]);
        self.push(Op::LookupRow { table, row }, v, ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.tanh();
        let ng = self.needs(&[a]);
        self.push(Op::Tanh(a), v, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.sigmoid();
        let ng = self.needs(&[a]);
        self.push(Op::Sigmoid(a), v, ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.max(0.0));
        let ng = self.needs(&[a]);
        self.push(Op::Relu(a), v, ng)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::ln);
        let ng = self.needs(&[a]);
        self.push(Op::Log(a), v, ng)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::sqrt);
        let ng = self.needs(&[a]);
        self.push(Op::Sqrt(a), v, ng)
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.softmax();
        let ng = self.needs(&[a]);
        self.push(Op::Softmax(a), v, ng)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::from_vec(1, 1, vec![self.nodes[a].value.sum()]);
        let ng = self.needs(&[a]);
        self.push(Op::Sum(a), v, ng)
    }

    pub fn broadcast_mul(&mut self, scalar: NodeId, vector: NodeId) -> NodeId {
        let s = self.scalar(scalar);
        let v = self.nodes[vector].value.scale(s);
        let ng = self.needs(&[scalar, vector]);
        self.push(Op::BroadcastMul { scalar, vector }, v, ng)
    }

    pub fn div_by_scalar(&mut self, vector: NodeId, scalar: NodeId) -> NodeId {
        let s = self.scalar(scalar);
        let v = self.nodes[vector].value.scale(1.0 / s);
        let ng = self.needs(&[scalar, vector]);
        self.push(Op::DivByScalar { vector, scalar }, v, ng)
    }

    /// sum_k weights[k] * items[k]; items must share one shape, weights is (K,1).
    pub fn weighted_sum(&mut self, items: &[NodeId], weights: NodeId) -> NodeId {
        let w = &self.nodes[weights].value;
        assert_eq!(w.len(), items.len(), "weighted_sum arity mismatch");
        let mut v = Tensor::zeros(self.nodes[items[0]].value.rows(), self.nodes[items[0]].value.cols());
        for (k, &item) in items.iter().enumerate() {
            let wk = w.data()[k];
            for (o, x) in v.data_mut().iter_mut().zip(self.nodes[item].value.data()) {
                *o += wk * x;
            }
        }
        let mut deps = items.to_vec();
        deps.push(weights);
        let ng = self.needs(&deps);
        self.push(Op::WeightedSum { items: items.to_vec(), weights }, v, ng)
    }

    /// Scatter-add weights onto a zero (size,1) vector at the given indices.
    /// Repeated indices accumulate.
    pub fn scatter(&mut self, weights: NodeId, ids: &[usize], size: usize) -> NodeId {
        let w = &self.nodes[weights].value;
        assert_eq!(w.len(), ids.len(), "scatter arity mismatch");
        let mut v = Tensor::zeros(size, 1);
        for (k, &id) in ids.iter().enumerate() {
            assert!(id < size, "scatter index out of range");
            v.data_mut()[id] += w.data()[k];
        }
        let ng = self.needs(&[weights]);
        self.push(Op::Scatter { weights, ids: ids.to_vec() }, v, ng)
    }

    /// Identity in the forward pass; negates the gradient in the backward pass.
    pub fn grad_reverse(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.clone();
        let ng = self.needs(&[a]);
        self.push(Op::GradReverse(a), v, ng)
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut self.grads[id] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Backpropagate from a (1,1) loss node. Clears previous gradients.
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(self.nodes[loss].value.shape(), (1, 1), "backward needs a scalar loss");
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss] = Some(Tensor::from_vec(1, 1, vec![1.0]));
        for id in (0..=loss).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let gout = match self.grads[id].clone() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, gout.clone());
                    self.accumulate(b, gout);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, gout.clone());
                    self.accumulate(b, gout.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = gout.mul(&self.nodes[b].value);
                    let db = gout.mul(&self.nodes[a].value);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::AddN(ids) => {
                    for &i in &ids.clone() {
                        self.accumulate(i, gout.clone());
                    }
                }
                Op::Scale(a, k) => {
                    let (a, k) = (*a, *k);
                    self.accumulate(a, gout.scale(k));
                }
                Op::AddScalar(a) => {
                    let a = *a;
                    self.accumulate(a, gout);
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = gout.matmul(&self.nodes[b].value.transpose());
                    let db = self.nodes[a].value.transpose().matmul(&gout);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Transpose(a) => {
                    let a = *a;
                    self.accumulate(a, gout.transpose());
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let g0 = gout.data()[0];
                    let da = self.nodes[b].value.scale(g0);
                    let db = self.nodes[a].value.scale(g0);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::ConcatRows(ids) => {
                    let ids = ids.clone();
                    let mut start = 0;
                    for &i in &ids {
                        let rows = self.nodes[i].value.rows();
                        let part = gout.slice_rows(start, rows);
                        start += rows;
                        self.accumulate(i, part);
                    }
                }
                Op::SliceRows { input, start } => {
                    let (input, start) = (*input, *start);
                    let src = &self.nodes[input].value;
                    let mut d = Tensor::zeros(src.rows(), src.cols());
                    let cols = src.cols();
                    let base = start * cols;
                    for (j, &g) in gout.data().iter().enumerate() {
                        d.data_mut()[base + j] = g;
                    }
                    self.accumulate(input, d);
                }
                Op::LookupRow { table, row } => {
                    let (table, row) = (*table, *row);
                    let src = &self.nodes[table].value;
                    let mut d = Tensor::zeros(src.rows(), src.cols());
                    let cols = src.cols();
                    for (c, &g) in gout.data().iter().enumerate() {
                        d.data_mut()[row * cols + c] = g;
                    }
                    self.accumulate(table, d);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let d = gout.zip_map(&self.nodes[id].value, |g, y| g * (1.0 - y * y));
                    self.accumulate(a, d);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let d = gout.zip_map(&self.nodes[id].value, |g, y| g * y * (1.0 - y));
                    self.accumulate(a, d);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let d = gout.zip_map(&self.nodes[a].value, |g, x| if x > 0.0 { g } else { 0.0 });
                    self.accumulate(a, d);
                }
                Op::Log(a) => {
                    let a = *a;
                    let d = gout.zip_map(&self.nodes[a].value, |g, x| g / x);
                    self.accumulate(a, d);
                }
                Op::Sqrt(a) => {
                    let a = *a;
                    let d = gout.zip_map(&self.nodes[id].value, |g, y| g * 0.5 / y);
                    self.accumulate(a, d);
                }
                Op::Softmax(a) => {
                    let a = *a;
                    let y = &self.nodes[id].value;
                    let s = gout.dot(y);
                    let d = gout.zip_map(y, |g, yi| yi * (g - s));
                    self.accumulate(a, d);
                }
                Op::Sum(a) => {
                    let a = *a;
                    let src = &self.nodes[a].value;
                    let d = Tensor::from_vec(src.rows(), src.cols(), vec![gout.data()[0]; src.len()]);
                    self.accumulate(a, d);
                }
                Op::BroadcastMul { scalar, vector } => {
                    let (scalar, vector) = (*scalar, *vector);
                    let s = self.nodes[scalar].value.data()[0];
                    let ds = Tensor::from_vec(1, 1, vec![gout.dot(&self.nodes[vector].value)]);
                    let dv = gout.scale(s);
                    self.accumulate(scalar, ds);
                    self.accumulate(vector, dv);
                }
                Op::DivByScalar { vector, scalar } => {
                    let (vector, scalar) = (*vector, *scalar);
                    let s = self.nodes[scalar].value.data()[0];
                    let dv = gout.scale(1.0 / s);
                    let ds = Tensor::from_vec(1, 1, vec![-gout.dot(&self.nodes[vector].value) / (s * s)]);
                    self.accumulate(vector, dv);
                    self.accumulate(scalar, ds);
                }
                Op::WeightedSum { items, weights } => {
                    let (items, weights) = (items.clone(), *weights);
                    let w = self.nodes[weights].value.clone();
                    let mut dw = Tensor::zeros(w.rows(), w.cols());
                    for (k, &item) in items.iter().enumerate() {
                        dw.data_mut()[k] = gout.dot(&self.nodes[item].value);
                        self.accumulate(item, gout.scale(w.data()[k]));
                    }
                    self.accumulate(weights, dw);
                }
                Op::Scatter { weights, ids } => {
                    let (weights, ids) = (*weights, ids.clone());
                    let mut dw = Tensor::zeros(ids.len(), 1);
                    for (k, &vid) in ids.iter().enumerate() {
                        dw.data_mut()[k] = gout.data()[vid];
                    }
                    self.accumulate(weights, dw);
                }
                Op::GradReverse(a) => {
                    let a = *a;
                    self.accumulate(a, gout.scale(-1.0));
                }
            }
        }
    }
}

/// Central-difference gradients of a scalar-valued function of several
/// tensors, for verifying analytic gradients.
pub fn numeric_gradient<F>(params: &[Tensor], h: f64, f: F) -> Vec<Tensor>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..work.len() {
        let mut g = Tensor::zeros(work[pi].rows(), work[pi].cols());
        for j in 0..work[pi].len() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let fp = f(&work);
            work[pi].data_mut()[j] = orig - h;
            let fm = f(&work);
            work[pi].data_mut()[j] = orig;
            g.data_mut()[j] = (fp - fm) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Largest relative disagreement between two gradient sets. The denominator
/// is floored so that near-zero pairs compare absolutely.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape());
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let err = (x - y).abs() / x.abs().max(y.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}
