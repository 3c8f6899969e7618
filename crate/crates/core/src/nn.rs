//! Shared neural building blocks: LSTM cell, Adam, gradient clipping,
//! dropout masks.
//!
//! The LSTM cell exists in two forms that must stay in lockstep: a graph
//! form used during training and a plain-tensor form used for inference on
//! frozen models. A unit test pins them to each other.

use rand::Rng;

use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Gate layout in the stacked pre-activation: input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
    pub hidden: usize,
}

impl LstmParams {
    /// Uniform init in [-scale, scale]; forget-gate bias starts at 1.
    pub fn new<R: Rng>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let wx = Tensor::uniform(4 * hidden, input, scale, rng);
        let wh = Tensor::uniform(4 * hidden, hidden, scale, rng);
        let mut b = Tensor::zeros(4 * hidden, 1);
        for i in hidden..2 * hidden {
            b.data_mut()[i] = 1.0;
        }
        LstmParams { wx, wh, b, hidden }
    }

    /// One step without a graph, for frozen-model inference.
    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> (Tensor, Tensor) {
        let z = self.wx.matmul(x).add(&self.wh.matmul(h)).add(&self.b);
        let hval = self.hidden;
        let i = z.slice_rows(0, hval).sigmoid();
        let f = z.slice_rows(hval, hval).sigmoid();
        let g = z.slice_rows(2 * hval, hval).tanh();
        let o = z.slice_rows(3 * hval, hval).sigmoid();
        let c2 = f.mul(c).add(&i.mul(&g));
        let h2 = o.mul(&c2.tanh());
        (h2, c2)
    }
}

/// Graph-side handles for one LSTM cell's parameters.
#[derive(Clone, Copy)]
pub struct LstmIds {
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
    pub hidden: usize,
}

/// One LSTM step on the tape; returns (h', c').
pub fn lstm_step(g: &mut Graph, p: LstmIds, x: NodeId, h: NodeId, c: NodeId) -> (NodeId, NodeId) {
    let zx = g.matmul(p.wx, x);
    let zh = g.matmul(p.wh, h);
    let zs = g.add(zx, zh);
    let z = g.add(zs, p.b);
    let i_pre = g.slice_rows(z, 0, p.hidden);
    let i = g.sigmoid(i_pre);
    let f_pre = g.slice_rows(z, p.hidden, p.hidden);
    let f = g.sigmoid(f_pre);
    let g_pre = g.slice_rows(z, 2 * p.hidden, p.hidden);
    let gg = g.tanh(g_pre);
    let o_pre = g.slice_rows(z, 3 * p.hidden, p.hidden);
    let o = g.sigmoid(o_pre);
    let fc = g.mul(f, c);
    let ig = g.mul(i, gg);
    let c2 = g.add(fc, ig);
    let ct = g.tanh(c2);
    let h2 = g.mul(o, ct);
    (h2, c2)
}

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= k;
            }
        }
    }
    norm
}

/// Adam with linear learning-rate warmup.
pub struct Adam {
    lr: f64,
    warmup_steps: usize,
    grad_clip: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(shapes: &[(usize, usize)], lr: f64, warmup_steps: usize, grad_clip: f64) -> Self {
        let m = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        let v = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        Adam { lr, warmup_steps, grad_clip, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v }
    }

    /// Effective learning rate at the current step count.
    pub fn current_lr(&self) -> f64 {
        if self.warmup_steps == 0 {
            return self.lr;
        }
        self.lr * (self.step as f64 / self.warmup_steps as f64).min(1.0)
    }

    /// Clips, then applies one update. `params` and `grads` must align with
    /// the shapes given at construction.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &mut [Tensor]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        clip_global_norm(grads, self.grad_clip);
        self.step += 1;
        let lr = self.current_lr();
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads.iter()).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for j in 0..g.len() {
                let gj = g.data()[j];
                let mj = self.beta1 * m.data()[j] + (1.0 - self.beta1) * gj;
                let vj = self.beta2 * v.data()[j] + (1.0 - self.beta2) * gj * gj;
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + self.eps);
                p.data_mut()[j] -= update;
            }
        }
    }
}

/// Inverted-dropout mask: entries are 0 with probability `p`, else 1/(1-p).
/// `p = 0` yields an all-ones mask.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Tensor {
    assert!((0.0..1.0).contains(&p), "dropout probability must be in [0,1)");
    if p == 0.0 {
        return Tensor::from_vec(rows, cols, vec![1.0; rows * cols]);
    }
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
    Tensor::from_vec(rows, cols, data)
}
