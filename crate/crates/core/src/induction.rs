//! Content-plan induction.
//!
//! Each review is encoded by a bidirectional LSTM; mean-pooled states split
//! into an aspect half `h_a` and a sentiment half `h_s`, which two softmax
//! heads turn into the review's content plan (an aspect distribution and a
//! sentiment distribution). Training is unsupervised on the aspect side: the
//! plan must reconstruct the review encoding out of learned aspect and
//! sentiment embedding matrices better than it reconstructs in-batch
//! negatives (max-margin), with an orthogonality penalty keeping embedding
//! rows distinct. The sentiment head is supervised by ratings, and an
//! adversarial head behind a gradient-reversal layer strips rating
//! information out of the aspect half.

use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointError};
use crate::corpus::{rating_to_label, RatingScale, ReviewRecord, Vocabulary};
use crate::graph::{Graph, NodeId};
use crate::nn::{dropout_mask, lstm_step, Adam, LstmIds, LstmParams};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum InductionError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("corpus too small: need at least 2 reviews, found {0}")]
    CorpusTooSmall(usize),
    #[error("rating error: {0}")]
    Rating(#[from] crate::corpus::CorpusError),
    #[error("non-finite loss at step {step} (epoch {epoch}); aborting")]
    NonFinite { step: usize, epoch: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint at {0} is not an induction checkpoint")]
    WrongKind(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InductionConfig {
    /// Number of latent aspects K_a.
    pub k_aspects: usize,
    /// Encoder width d; must be even, the two halves carry aspect/sentiment.
    pub hidden: usize,
    /// Negatives per review in the max-margin reconstruction loss.
    pub negatives: usize,
    /// Weight of the orthogonality penalty.
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    pub grad_clip: f64,
    /// Fraction of reviews held out to pick the best epoch.
    pub dev_fraction: f64,
    /// Uniform init half-width for the token embedding table. Wider than the
    /// recurrent weights: the initial token geometry must outlive the first
    /// epochs of Adam updates, or the hinge organizes around noise.
    pub emb_init: f64,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig {
            k_aspects: 10,
            hidden: 64,
            negatives: 5,
            lambda: 1.0,
            lr: 3e-4,
            batch_size: 16,
            warmup_steps: 200,
            dropout: 0.1,
            max_epochs: 15,
            grad_clip: 3.0,
            dev_fraction: 0.1,
            emb_init: 0.1,
        }
    }
}

impl InductionConfig {
    /// Settings tuned for the generated desk corpus: hundreds of short
    /// reviews instead of millions. The aspect memory is over-provisioned at
    /// twice the planted aspect count, the embedding init is wide so the
    /// initial token geometry survives early optimizer updates, dropout is
    /// off (on a corpus this small it blurs the cluster structure the hinge
    /// should amplify), and the orthogonality weight is soft enough that
    /// near-duplicate aspect rows are not torn apart.
    pub fn desk() -> Self {
        InductionConfig {
            k_aspects: 16,
            lambda: 0.1,
            lr: 1e-3,
            warmup_steps: 100,
            dropout: 0.0,
            max_epochs: 30,
            emb_init: 2.0,
            ..InductionConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), InductionError> {
        let fail = |m: &str| Err(InductionError::Config(m.to_string()));
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return fail("hidden must be a positive even number");
        }
        if self.k_aspects < 2 {
            return fail("k_aspects must be at least 2");
        }
        if self.negatives == 0 {
            return fail("negatives must be positive");
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return fail("lambda must be finite and non-negative");
        }
        if !(self.lr > 0.0) {
            return fail("lr must be positive");
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2 (negatives come from the batch)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return fail("grad_clip must be positive");
        }
        if !(0.0..=0.5).contains(&self.dev_fraction) {
            return fail("dev_fraction must be in [0, 0.5]");
        }
        if !(self.emb_init > 0.0) {
            return fail("emb_init must be positive");
        }
        Ok(())
    }
}

/// A content plan: one distribution over aspects, one over sentiment
/// classes. Construction validates both simplices.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ContentPlan {
    pub p_a: Vec<f64>,
    pub p_s: Vec<f64>,
}

impl ContentPlan {
    pub fn new(p_a: Vec<f64>, p_s: Vec<f64>) -> Result<ContentPlan, InductionError> {
        for (name, v) in [("p_a", &p_a), ("p_s", &p_s)] {
            if v.is_empty() {
                return Err(InductionError::Config(format!("{name} is empty")));
            }
            if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(InductionError::Config(format!("{name} has negative or non-finite mass")));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(InductionError::Config(format!("{name} sums to {sum}, not 1")));
            }
        }
        Ok(ContentPlan { p_a, p_s })
    }
}

/// Encoder outputs for one review.
pub struct Encoding {
    /// Per-token bidirectional states, each (hidden, 1).
    pub token_states: Vec<Tensor>,
    /// Aspect half of the mean-pooled encoding, (hidden/2, 1).
    pub h_a: Tensor,
    /// Sentiment half, (hidden/2, 1).
    pub h_s: Tensor,
}

#[derive(Clone)]
pub struct InductionModel {
    pub vocab_size: usize,
    pub hidden: usize,
    pub k_aspects: usize,
    pub k_sentiments: usize,
    pub emb: Tensor,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub w_a: Tensor,
    pub b_a: Tensor,
    pub w_s: Tensor,
    pub b_s: Tensor,
    /// Aspect embedding matrix A, rows are aspect vectors.
    pub a_emb: Tensor,
    /// Sentiment embedding matrix S.
    pub s_emb: Tensor,
    pub w_adv: Tensor,
    pub b_adv: Tensor,
}

const INIT_SCALE: f64 = 0.1;

impl InductionModel {
    pub fn new(
        vocab_size: usize,
        k_aspects: usize,
        k_sentiments: usize,
        hidden: usize,
        rng: &mut StdRng,
    ) -> InductionModel {
        assert!(hidden % 2 == 0 && hidden > 0, "hidden must be even");
        let half = hidden / 2;
        InductionModel {
            vocab_size,
            hidden,
            k_aspects,
            k_sentiments,
            emb: Tensor::uniform(vocab_size, hidden, INIT_SCALE, rng),
            fwd: LstmParams::new(hidden, half, INIT_SCALE, rng),
            bwd: LstmParams::new(hidden, half, INIT_SCALE, rng),
            w_a: Tensor::uniform(k_aspects, half, INIT_SCALE, rng),
            b_a: Tensor::zeros(k_aspects, 1),
            w_s: Tensor::uniform(k_sentiments, half, INIT_SCALE, rng),
            b_s: Tensor::zeros(k_sentiments, 1),
            a_emb: Tensor::uniform(k_aspects, half, INIT_SCALE, rng),
            s_emb: Tensor::uniform(k_sentiments, half, INIT_SCALE, rng),
            w_adv: Tensor::uniform(k_sentiments, half, INIT_SCALE, rng),
            b_adv: Tensor::zeros(k_sentiments, 1),
        }
    }

    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("emb", &self.emb),
            ("fwd_wx", &self.fwd.wx),
            ("fwd_wh", &self.fwd.wh),
            ("fwd_b", &self.fwd.b),
            ("bwd_wx", &self.bwd.wx),
            ("bwd_wh", &self.bwd.wh),
            ("bwd_b", &self.bwd.b),
            ("w_a", &self.w_a),
            ("b_a", &self.b_a),
            ("w_s", &self.w_s),
            ("b_s", &self.b_s),
            ("a_emb", &self.a_emb),
            ("s_emb", &self.s_emb),
            ("w_adv", &self.w_adv),
            ("b_adv", &self.b_adv),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("emb", &mut self.emb),
            ("fwd_wx", &mut self.fwd.wx),
            ("fwd_wh", &mut self.fwd.wh),
            ("fwd_b", &mut self.fwd.b),
            ("bwd_wx", &mut self.bwd.wx),
            ("bwd_wh", &mut self.bwd.wh),
            ("bwd_b", &mut self.bwd.b),
            ("w_a", &mut self.w_a),
            ("b_a", &mut self.b_a),
            ("w_s", &mut self.w_s),
            ("b_s", &mut self.b_s),
            ("a_emb", &mut self.a_emb),
            ("s_emb", &mut self.s_emb),
            ("w_adv", &mut self.w_adv),
            ("b_adv", &mut self.b_adv),
        ]
    }

    /// Frozen-model encoding: bidirectional LSTM over the tokens, per-token
    /// states, and the two halves of the mean-pooled state.
    pub fn encode(&self, tokens: &[u32]) -> Encoding {
        assert!(!tokens.is_empty(), "cannot encode an empty token sequence");
        let half = self.hidden / 2;
        let inputs: Vec<Tensor> = tokens.iter().map(|&t| self.emb.row_vector(t as usize)).collect();

        let mut fwd_states = Vec::with_capacity(tokens.len());
        let (mut h, mut c) = (Tensor::zeros(half, 1), Tensor::zeros(half, 1));
        for x in &inputs {
            let (h2, c2) = self.fwd.step(x, &h, &c);
            fwd_states.push(h2.clone());
            h = h2;
            c = c2;
        }
        let mut bwd_states = vec![Tensor::zeros(half, 1); tokens.len()];
        let (mut h, mut c) = (Tensor::zeros(half, 1), Tensor::zeros(half, 1));
        for t in (0..tokens.len()).rev() {
            let (h2, c2) = self.bwd.step(&inputs[t], &h, &c);
            bwd_states[t] = h2.clone();
            h = h2;
            c = c2;
        }

        let n = tokens.len() as f64;
        let mut mean_f = Tensor::zeros(half, 1);
        let mut mean_b = Tensor::zeros(half, 1);
        for t in 0..tokens.len() {
            mean_f.add_assign(&fwd_states[t]);
            mean_b.add_assign(&bwd_states[t]);
        }
        let h_a = mean_f.scale(1.0 / n);
        let h_s = mean_b.scale(1.0 / n);

        let token_states = (0..tokens.len())
            .map(|t| Tensor::concat_rows(&[&fwd_states[t], &bwd_states[t]]))
            .collect();
        Encoding { token_states, h_a, h_s }
    }

    /// Aspect and sentiment distributions for one review.
    pub fn infer_plan(&self, tokens: &[u32]) -> ContentPlan {
        let enc = self.encode(tokens);
        let p_a = self.w_a.matmul(&enc.h_a).add(&self.b_a).softmax();
        let p_s = self.w_s.matmul(&enc.h_s).add(&self.b_s).softmax();
        ContentPlan::new(p_a.data().to_vec(), p_s.data().to_vec())
            .expect("softmax output is a valid simplex")
    }

    /// Plan-weighted mixtures of the aspect and sentiment embedding rows.
    pub fn reconstruct(&self, plan: &ContentPlan) -> (Tensor, Tensor) {
        assert_eq!(plan.p_a.len(), self.k_aspects);
        assert_eq!(plan.p_s.len(), self.k_sentiments);
        let d_a = self.a_emb.transpose().matmul(&Tensor::vector(&plan.p_a));
        let d_s = self.s_emb.transpose().matmul(&Tensor::vector(&plan.p_s));
        (d_a, d_s)
    }

    /// Adversarial sentiment distribution read off the aspect half.
    pub fn adversary_probs(&self, h_a: &Tensor) -> Tensor {
        self.w_adv.matmul(h_a).add(&self.b_adv).softmax()
    }

    /// Cross-entropy of the sentiment head plus cross-entropy of the
    /// adversarial head on `h_a`, both against the observed label.
    pub fn disentangle_loss(&self, h_a: &Tensor, p_s: &[f64], label: usize) -> f64 {
        let p_adv = self.adversary_probs(h_a);
        -p_s[label].ln() - p_adv.data()[label].ln()
    }

    const PARAM_SHAPES: [(&'static str, fn(&InductionModel) -> (usize, usize)); 15] = [
        ("emb", |m| (m.vocab_size, m.hidden)),
        ("fwd_wx", |m| (2 * m.hidden, m.hidden)),
        ("fwd_wh", |m| (2 * m.hidden, m.hidden / 2)),
        ("fwd_b", |m| (2 * m.hidden, 1)),
        ("bwd_wx", |m| (2 * m.hidden, m.hidden)),
        ("bwd_wh", |m| (2 * m.hidden, m.hidden / 2)),
        ("bwd_b", |m| (2 * m.hidden, 1)),
        ("w_a", |m| (m.k_aspects, m.hidden / 2)),
        ("b_a", |m| (m.k_aspects, 1)),
        ("w_s", |m| (m.k_sentiments, m.hidden / 2)),
        ("b_s", |m| (m.k_sentiments, 1)),
        ("a_emb", |m| (m.k_aspects, m.hidden / 2)),
        ("s_emb", |m| (m.k_sentiments, m.hidden / 2)),
        ("w_adv", |m| (m.k_sentiments, m.hidden / 2)),
        ("b_adv", |m| (m.k_sentiments, 1)),
    ];

    pub fn save(&self, dir: &Path, vocab_sha256: &str, dev_loss: f64, epoch: usize) -> Result<(), CheckpointError> {
        let metadata = serde_json::json!({
            "kind": "induction",
            "version": 1,
            "vocab_size": self.vocab_size,
            "hidden": self.hidden,
            "k_aspects": self.k_aspects,
            "k_sentiments": self.k_sentiments,
            "vocab_sha256": vocab_sha256,
            "dev_loss": dev_loss,
            "epoch": epoch,
        });
        checkpoint::save_params(dir, &self.named_params(), &metadata)
    }

    pub fn load(dir: &Path) -> Result<(InductionModel, serde_json::Value), InductionError> {
        let meta = checkpoint::load_metadata(dir)?;
        if meta.get("kind").and_then(|v| v.as_str()) != Some("induction") {
            return Err(InductionError::WrongKind(dir.display().to_string()));
        }
        let dim = |key: &str| -> Result<usize, InductionError> {
            meta.get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| InductionError::Config(format!("metadata missing {key}")))
        };
        let (vocab_size, hidden) = (dim("vocab_size")?, dim("hidden")?);
        let (k_aspects, k_sentiments) = (dim("k_aspects")?, dim("k_sentiments")?);
        let mut rng = StdRng::seed_from_u64(0);
        let mut model = InductionModel::new(vocab_size, k_aspects, k_sentiments, hidden, &mut rng);
        for (name, shape) in Self::PARAM_SHAPES {
            let (r, c) = shape(&model);
            let t = checkpoint::load_param(dir, name, r, c)?;
            for (pname, p) in model.named_params_mut() {
                if pname == name {
                    *p = t;
                    break;
                }
            }
        }
        Ok((model, meta))
    }
}

/// Max-margin reconstruction loss: each of the m negatives contributes one
/// hinge term on the aspect side and one on the sentiment side.
pub fn recon_loss(
    d_a: &Tensor,
    d_s: &Tensor,
    h_a: &Tensor,
    h_s: &Tensor,
    negatives: &[(Tensor, Tensor)],
) -> f64 {
    let pos_a = d_a.dot(h_a);
    let pos_s = d_s.dot(h_s);
    negatives
        .iter()
        .map(|(n_a, n_s)| {
            (1.0 - pos_a + d_a.dot(n_a)).max(0.0) + (1.0 - pos_s + d_s.dot(n_s)).max(0.0)
        })
        .sum()
}

fn ortho_penalty(m: &Tensor) -> f64 {
    let k = m.rows();
    let mut rows: Vec<Tensor> = Vec::with_capacity(k);
    for i in 0..k {
        let r = m.row_vector(i);
        let n = r.norm();
        rows.push(if n > 0.0 { r.scale(1.0 / n) } else { r });
    }
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            let g = rows[i].dot(&rows[j]) - if i == j { 1.0 } else { 0.0 };
            sum += g * g;
        }
    }
    sum.sqrt()
}

/// Frobenius distance of the row-normalized Gram matrices from identity,
/// summed over the aspect and sentiment embedding matrices.
pub fn ortho_regularizer(a_emb: &Tensor, s_emb: &Tensor) -> f64 {
    ortho_penalty(a_emb) + ortho_penalty(s_emb)
}

// --- Training graph --------------------------------------------------------

pub struct InductionParamIds {
    pub emb: NodeId,
    pub fwd: LstmIds,
    pub bwd: LstmIds,
    pub w_a: NodeId,
    pub b_a: NodeId,
    pub w_s: NodeId,
    pub b_s: NodeId,
    pub a_emb: NodeId,
    pub s_emb: NodeId,
    pub w_adv: NodeId,
    pub b_adv: NodeId,
}

impl InductionParamIds {
    /// Node ids in `named_params` order, for aligned gradient extraction.
    pub fn ordered(&self) -> Vec<NodeId> {
        vec![
            self.emb,
            self.fwd.wx,
            self.fwd.wh,
            self.fwd.b,
            self.bwd.wx,
            self.bwd.wh,
            self.bwd.b,
            self.w_a,
            self.b_a,
            self.w_s,
            self.b_s,
            self.a_emb,
            self.s_emb,
            self.w_adv,
            self.b_adv,
        ]
    }
}

/// Inserts all parameters as trainable leaves, in `named_params` order.
pub fn insert_params(g: &mut Graph, model: &InductionModel) -> InductionParamIds {
    let half = model.hidden / 2;
    let emb = g.param(model.emb.clone());
    let fwd = LstmIds {
        wx: g.param(model.fwd.wx.clone()),
        wh: g.param(model.fwd.wh.clone()),
        b: g.param(model.fwd.b.clone()),
        hidden: half,
    };
    let bwd = LstmIds {
        wx: g.param(model.bwd.wx.clone()),
        wh: g.param(model.bwd.wh.clone()),
        b: g.param(model.bwd.b.clone()),
        hidden: half,
    };
    InductionParamIds {
        emb,
        fwd,
        bwd,
        w_a: g.param(model.w_a.clone()),
        b_a: g.param(model.b_a.clone()),
        w_s: g.param(model.w_s.clone()),
        b_s: g.param(model.b_s.clone()),
        a_emb: g.param(model.a_emb.clone()),
        s_emb: g.param(model.s_emb.clone()),
        w_adv: g.param(model.w_adv.clone()),
        b_adv: g.param(model.b_adv.clone()),
    }
}

/// Dropout masks for one review; `None` means evaluation mode.
pub struct ReviewMasks {
    pub emb: Vec<Tensor>,
    pub pooled_a: Tensor,
    pub pooled_s: Tensor,
}

pub fn sample_masks(tokens: usize, hidden: usize, dropout: f64, rng: &mut StdRng) -> ReviewMasks {
    let half = hidden / 2;
    ReviewMasks {
        emb: (0..tokens).map(|_| dropout_mask(hidden, 1, dropout, rng)).collect(),
        pooled_a: dropout_mask(half, 1, dropout, rng),
        pooled_s: dropout_mask(half, 1, dropout, rng),
    }
}

/// Graph-side encoder; returns (h_a, h_s) node ids.
fn encode_on_graph(
    g: &mut Graph,
    ids: &InductionParamIds,
    tokens: &[u32],
    masks: Option<&ReviewMasks>,
) -> (NodeId, NodeId) {
    let half = ids.fwd.hidden;
    let zero = g.constant(Tensor::zeros(half, 1));
    let inputs: Vec<NodeId> = tokens
        .iter()
        .enumerate()
        .map(|(t, &tok)| {
            let x = g.lookup_row(ids.emb, tok as usize);
            match masks {
                Some(m) => {
                    let mask = g.constant(m.emb[t].clone());
                    g.mul(x, mask)
                }
                None => x,
            }
        })
        .collect();

    let mut fwd_states = Vec::with_capacity(tokens.len());
    let (mut h, mut c) = (zero, zero);
    for &x in &inputs {
        let (h2, c2) = lstm_step(g, ids.fwd, x, h, c);
        fwd_states.push(h2);
        h = h2;
        c = c2;
    }
    let mut bwd_states = vec![zero; tokens.len()];
    let (mut h, mut c) = (zero, zero);
    for t in (0..tokens.len()).rev() {
        let (h2, c2) = lstm_step(g, ids.bwd, inputs[t], h, c);
        bwd_states[t] = h2;
        h = h2;
        c = c2;
    }

    let inv_n = 1.0 / tokens.len() as f64;
    let sum_f = g.add_n(&fwd_states);
    let sum_b = g.add_n(&bwd_states);
    let mut h_a = g.scale(sum_f, inv_n);
    let mut h_s = g.scale(sum_b, inv_n);
    if let Some(m) = masks {
        let ma = g.constant(m.pooled_a.clone());
        let ms = g.constant(m.pooled_s.clone());
        h_a = g.mul(h_a, ma);
        h_s = g.mul(h_s, ms);
    }
    (h_a, h_s)
}

fn ortho_on_graph(g: &mut Graph, m: NodeId, k: usize) -> NodeId {
    let mut rows = Vec::with_capacity(k);
    for i in 0..k {
        let r = g.lookup_row(m, i);
        let n2 = g.dot(r, r);
        let n = g.sqrt(n2);
        rows.push(g.div_by_scalar(r, n));
    }
    let mut terms = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let gij = g.dot(rows[i], rows[j]);
            let dev = if i == j { g.add_scalar(gij, -1.0) } else { gij };
            terms.push(g.mul(dev, dev));
        }
    }
    let sum = g.add_n(&terms);
    g.sqrt(sum)
}

/// One review's tokens and rating class.
pub struct BatchItem {
    pub tokens: Vec<u32>,
    pub label: usize,
}

pub struct BatchLoss {
    pub total: NodeId,
    pub recon_mean: NodeId,
    pub disen_mean: NodeId,
    /// Present only when lambda > 0; a zero lambda excludes the term from
    /// the loss entirely.
    pub regularizer: Option<NodeId>,
}

/// Builds the full induction loss for a batch: mean over reviews of
/// (reconstruction hinge + disentanglement cross-entropies), plus
/// lambda times the orthogonality penalty. This is the exact function the
/// trainer differentiates.
///
/// `adversary_reversed` controls the reversal layer under the adversarial
/// head. Training always passes true; with the reversal in place the
/// backward pass intentionally differs from the true derivative, so
/// finite-difference checks run with false and the reversal's sign contract
/// is verified separately.
pub fn build_batch_loss(
    g: &mut Graph,
    ids: &InductionParamIds,
    model: &InductionModel,
    items: &[&BatchItem],
    negatives: &[Vec<usize>],
    lambda: f64,
    adversary_reversed: bool,
    masks: Option<&[ReviewMasks]>,
) -> BatchLoss {
    assert_eq!(items.len(), negatives.len());
    let b = items.len();

    let mut h_as = Vec::with_capacity(b);
    let mut h_ss = Vec::with_capacity(b);
    for (i, item) in items.iter().enumerate() {
        let (h_a, h_s) = encode_on_graph(g, ids, &item.tokens, masks.map(|m| &m[i]));
        h_as.push(h_a);
        h_ss.push(h_s);
    }

    let a_t = g.transpose(ids.a_emb);
    let s_t = g.transpose(ids.s_emb);

    let mut recon_terms = Vec::with_capacity(b);
    let mut disen_terms = Vec::with_capacity(b);
    for (i, item) in items.iter().enumerate() {
        let za = g.matmul(ids.w_a, h_as[i]);
        let za = g.add(za, ids.b_a);
        let p_a = g.softmax(za);
        let zs = g.matmul(ids.w_s, h_ss[i]);
        let zs = g.add(zs, ids.b_s);
        let p_s = g.softmax(zs);

        let d_a = g.matmul(a_t, p_a);
        let d_s = g.matmul(s_t, p_s);
        let pos_a = g.dot(d_a, h_as[i]);
        let pos_s = g.dot(d_s, h_ss[i]);

        let mut hinges = Vec::with_capacity(2 * negatives[i].len());
        for &j in &negatives[i] {
            let neg_a = g.dot(d_a, h_as[j]);
            let diff_a = g.sub(neg_a, pos_a);
            let arg_a = g.add_scalar(diff_a, 1.0);
            hinges.push(g.relu(arg_a));
            let neg_s = g.dot(d_s, h_ss[j]);
            let diff_s = g.sub(neg_s, pos_s);
            let arg_s = g.add_scalar(diff_s, 1.0);
            hinges.push(g.relu(arg_s));
        }
        recon_terms.push(g.add_n(&hinges));

        let log_ps = g.log(p_s);
        let picked_s = g.slice_rows(log_ps, item.label, 1);

        let adv_in = if adversary_reversed { g.grad_reverse(h_as[i]) } else { h_as[i] };
        let zadv = g.matmul(ids.w_adv, adv_in);
        let zadv = g.add(zadv, ids.b_adv);
        let p_adv = g.softmax(zadv);
        let log_padv = g.log(p_adv);
        let picked_adv = g.slice_rows(log_padv, item.label, 1);

        let ce = g.add(picked_s, picked_adv);
        disen_terms.push(g.scale(ce, -1.0));
    }

    let recon_sum = g.add_n(&recon_terms);
    let recon_mean = g.scale(recon_sum, 1.0 / b as f64);
    let disen_sum = g.add_n(&disen_terms);
    let disen_mean = g.scale(disen_sum, 1.0 / b as f64);
    let base = g.add(recon_mean, disen_mean);

    // A zero lambda leaves the penalty out of the graph entirely, so the
    // lambda = 0 loss is bit-identical to recon + disen.
    let (total, regularizer) = if lambda > 0.0 {
        let ra = ortho_on_graph(g, ids.a_emb, model.k_aspects);
        let rs = ortho_on_graph(g, ids.s_emb, model.k_sentiments);
        let reg = g.add(ra, rs);
        let weighted = g.scale(reg, lambda);
        (g.add(base, weighted), Some(reg))
    } else {
        (base, None)
    };

    BatchLoss { total, recon_mean, disen_mean, regularizer }
}

/// Adversarial cross-entropy term alone, optionally with the reversal layer
/// disabled; used to verify the sign contract of gradient reversal.
pub fn build_adversarial_ce(
    g: &mut Graph,
    ids: &InductionParamIds,
    tokens: &[u32],
    label: usize,
    reversed: bool,
) -> NodeId {
    let (h_a, _h_s) = encode_on_graph(g, ids, tokens, None);
    let input = if reversed { g.grad_reverse(h_a) } else { h_a };
    let z = g.matmul(ids.w_adv, input);
    let z = g.add(z, ids.b_adv);
    let p = g.softmax(z);
    let lp = g.log(p);
    let picked = g.slice_rows(lp, label, 1);
    g.scale(picked, -1.0)
}

// --- Trainer ----------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InductionReport {
    /// Full training objective before any update.
    pub initial_loss: f64,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Held-out reconstruction loss per epoch.
    pub dev_losses: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

struct Prepared {
    items: Vec<BatchItem>,
}

fn prepare_items(
    records: &[ReviewRecord],
    vocab: &Vocabulary,
    scale: RatingScale,
) -> Result<Prepared, InductionError> {
    let mut items = Vec::with_capacity(records.len());
    for r in records {
        let tokens = vocab.tokenize(&r.text);
        debug_assert!(!tokens.is_empty());
        items.push(BatchItem { tokens, label: rating_to_label(r.rating, scale)? as usize });
    }
    Ok(Prepared { items })
}

/// Deterministic negatives for evaluation: the next `m` reviews in subset
/// order, cyclically.
fn cyclic_negatives(len: usize, i: usize, m: usize) -> Vec<usize> {
    (1..=m).map(|k| (i + k) % len).collect()
}

/// Lloyd's k-means with several seeded restarts, keeping the run with the
/// lowest within-cluster squared distance. Restarts matter: a single run on
/// a few hundred points regularly merges two true clusters under one
/// centroid, and everything downstream inherits that mistake.
fn kmeans_rows(points: &[Tensor], k: usize, rng: &mut StdRng) -> Vec<Vec<f64>> {
    const RESTARTS: usize = 5;
    const ITERS: usize = 10;
    let dim = points[0].rows();
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut idx: Vec<usize> = (0..points.len()).collect();
    for _ in 0..RESTARTS {
        idx.shuffle(rng);
        let mut centroids: Vec<Vec<f64>> =
            (0..k).map(|c| points[idx[c % idx.len()]].data().to_vec()).collect();
        let mut assign = vec![0usize; points.len()];
        let mut sse = 0.0;
        for _ in 0..ITERS {
            sse = 0.0;
            for (i, p) in points.iter().enumerate() {
                let mut nearest = (f64::MAX, 0usize);
                for (c, cent) in centroids.iter().enumerate() {
                    let d: f64 = p.data().iter().zip(cent).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < nearest.0 {
                        nearest = (d, c);
                    }
                }
                assign[i] = nearest.1;
                sse += nearest.0;
            }
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (i, p) in points.iter().enumerate() {
                counts[assign[i]] += 1;
                for (s, v) in sums[assign[i]].iter_mut().zip(p.data()) {
                    *s += v;
                }
            }
            for (c, count) in counts.iter().enumerate() {
                // Empty clusters keep their seed row.
                if *count > 0 {
                    for s in &mut sums[c] {
                        *s /= *count as f64;
                    }
                    centroids[c] = std::mem::take(&mut sums[c]);
                }
            }
        }
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((sse, centroids));
        }
    }
    best.expect("at least one restart").1
}

fn eval_subset(
    model: &InductionModel,
    items: &[BatchItem],
    subset: &[usize],
    m: usize,
    lambda: f64,
    recon_only: bool,
) -> f64 {
    let encs: Vec<Encoding> = subset.iter().map(|&i| model.encode(&items[i].tokens)).collect();
    let mut total = 0.0;
    for (pos, &i) in subset.iter().enumerate() {
        let plan = {
            let p_a = model.w_a.matmul(&encs[pos].h_a).add(&model.b_a).softmax();
            let p_s = model.w_s.matmul(&encs[pos].h_s).add(&model.b_s).softmax();
            (p_a, p_s)
        };
        let d_a = model.a_emb.transpose().matmul(&plan.0);
        let d_s = model.s_emb.transpose().matmul(&plan.1);
        let negs: Vec<(Tensor, Tensor)> = cyclic_negatives(subset.len(), pos, m)
            .into_iter()
            .map(|j| (encs[j].h_a.clone(), encs[j].h_s.clone()))
            .collect();
        total += recon_loss(&d_a, &d_s, &encs[pos].h_a, &encs[pos].h_s, &negs);
        if !recon_only {
            total += model.disentangle_loss(&encs[pos].h_a, plan.1.data(), items[i].label);
        }
    }
    let mut loss = total / subset.len() as f64;
    if !recon_only && lambda > 0.0 {
        loss += lambda * ortho_regularizer(&model.a_emb, &model.s_emb);
    }
    loss
}

/// Trains the induction model. The dev split (by review, after a seeded
/// shuffle) picks the best epoch by reconstruction loss; the returned model
/// carries that epoch's parameters.
pub fn train_induction(
    records: &[ReviewRecord],
    vocab: &Vocabulary,
    scale: RatingScale,
    cfg: &InductionConfig,
    seed: u64,
) -> Result<(InductionModel, InductionReport), InductionError> {
    cfg.validate()?;
    if records.len() < 2 {
        return Err(InductionError::CorpusTooSmall(records.len()));
    }
    let prepared = prepare_items(records, vocab, scale)?;
    let items = &prepared.items;
    let k_sentiments = scale.num_classes() as usize;

    let mut rng = StdRng::seed_from_u64(seed);
    let mut model =
        InductionModel::new(vocab.size(), cfg.k_aspects, k_sentiments, cfg.hidden, &mut rng);
    // Rescaling after the draw keeps the RNG stream independent of emb_init.
    model.emb = model.emb.scale(cfg.emb_init / INIT_SCALE);

    // K-means over the initial encodings seeds the aspect memory, the same
    // way the aspect-autoencoder line of work initializes its aspect matrix.
    // Rows start at cluster means rather than random draws, and the routing
    // bias -|c|^2/2 makes the initial argmax of W_a h + b exactly the
    // nearest-centroid assignment, so routing begins aligned with whatever
    // cluster structure the init geometry already carries. Random rows
    // instead tend to die early: two or three rows capture the whole batch
    // and the rest never receive gradient.
    let encs: Vec<Tensor> = items.iter().map(|it| model.encode(&it.tokens).h_a).collect();
    let half = cfg.hidden / 2;
    let centroids = kmeans_rows(&encs, cfg.k_aspects, &mut rng);
    for (k, cent) in centroids.iter().enumerate() {
        model.a_emb.data_mut()[k * half..(k + 1) * half].copy_from_slice(cent);
        model.w_a.data_mut()[k * half..(k + 1) * half].copy_from_slice(cent);
        model.b_a.data_mut()[k] = -0.5 * cent.iter().map(|x| x * x).sum::<f64>();
    }

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng);
    let dev_n = ((items.len() as f64 * cfg.dev_fraction).round() as usize)
        .min(items.len() - 2)
        .max(if cfg.dev_fraction > 0.0 { 1 } else { 0 });
    let dev_idx: Vec<usize> = order[..dev_n].to_vec();
    let mut train_idx: Vec<usize> = order[dev_n..].to_vec();

    let initial_loss =
        eval_subset(&model, items, &train_idx, cfg.negatives, cfg.lambda, false);

    let shapes: Vec<(usize, usize)> =
        model.named_params().iter().map(|(_, t)| t.shape()).collect();
    let mut adam = Adam::new(&shapes, cfg.lr, cfg.warmup_steps, cfg.grad_clip);

    let mut best: Option<(f64, InductionModel, usize)> = None;
    let mut epoch_losses = Vec::with_capacity(cfg.max_epochs);
    let mut dev_losses = Vec::with_capacity(cfg.max_epochs);
    let mut step = 0usize;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0usize;

        for chunk in train_idx.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<&BatchItem> = chunk.iter().map(|&i| &items[i]).collect();
            let negatives: Vec<Vec<usize>> = (0..batch.len())
                .map(|i| {
                    (0..cfg.negatives)
                        .map(|_| {
                            let j = rng.gen_range(0..batch.len() - 1);
                            if j >= i { j + 1 } else { j }
                        })
                        .collect()
                })
                .collect();
            let masks: Option<Vec<ReviewMasks>> = if cfg.dropout > 0.0 {
                Some(
                    batch
                        .iter()
                        .map(|it| sample_masks(it.tokens.len(), cfg.hidden, cfg.dropout, &mut rng))
                        .collect(),
                )
            } else {
                None
            };

            let mut g = Graph::new();
            let ids = insert_params(&mut g, &model);
            let loss = build_batch_loss(
                &mut g,
                &ids,
                &model,
                &batch,
                &negatives,
                cfg.lambda,
                true,
                masks.as_deref(),
            );
            let loss_val = g.scalar(loss.total);
            if !loss_val.is_finite() {
                return Err(InductionError::NonFinite { step, epoch });
            }
            g.backward(loss.total);

            let mut grads: Vec<Tensor> = ids
                .ordered()
                .iter()
                .zip(model.named_params().iter())
                .map(|(&id, (_, t))| {
                    g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
                })
                .collect();
            let mut params = model.named_params_mut();
            let mut refs: Vec<&mut Tensor> = params.iter_mut().map(|(_, t)| &mut **t).collect();
            adam.step(&mut refs, &mut grads);

            epoch_sum += loss_val;
            epoch_batches += 1;
            step += 1;
            if step % 100 == 0 {
                log::info!("induction step {step}: batch loss {loss_val:.4}");
            }
        }

        let epoch_loss = epoch_sum / epoch_batches.max(1) as f64;
        epoch_losses.push(epoch_loss);
        let dev_subset: &[usize] = if dev_idx.is_empty() { &train_idx } else { &dev_idx };
        let dev_loss = eval_subset(&model, items, dev_subset, cfg.negatives, cfg.lambda, true);
        dev_losses.push(dev_loss);
        log::info!("induction epoch {epoch}: train {epoch_loss:.4}, dev recon {dev_loss:.4}");

        if best.as_ref().map_or(true, |(b, _, _)| dev_loss < *b) {
            best = Some((dev_loss, model.clone(), epoch));
        }
    }

    let (_, best_model, best_epoch) = best.expect("at least one epoch ran");
    let report = InductionReport { initial_loss, epoch_losses, dev_losses, best_epoch };
    Ok((best_model, report))
}

// --- Analysis helpers -------------------------------------------------------

/// Fraction of items whose cluster's majority label matches their own.
pub fn cluster_purity(assignments: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), labels.len());
    assert!(!assignments.is_empty());
    let k = assignments.iter().max().unwrap() + 1;
    let c = labels.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0usize; c]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        counts[a][l] += 1;
    }
    let majority: usize = counts.iter().map(|row| row.iter().max().copied().unwrap_or(0)).sum();
    majority as f64 / assignments.len() as f64
}

/// Held-out accuracy of a softmax-regression probe: 80/20 split after a
/// seeded shuffle, full-batch Adam on the cross-entropy. Used to measure how
/// much label information a representation carries.
pub fn probe_accuracy(features: &[Tensor], labels: &[usize], n_classes: usize, seed: u64) -> f64 {
    assert_eq!(features.len(), labels.len());
    assert!(features.len() >= 5, "probe needs at least 5 examples");
    let dim = features[0].rows();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut rng);
    let n_test = (features.len() / 5).max(1);
    let (test_idx, train_idx) = order.split_at(n_test);

    let mut w = Tensor::zeros(n_classes, dim);
    let mut b = Tensor::zeros(n_classes, 1);
    let mut adam = Adam::new(&[(n_classes, dim), (n_classes, 1)], 0.05, 0, 5.0);
    let inv_n = 1.0 / train_idx.len() as f64;
    for _ in 0..400 {
        let mut gw = Tensor::zeros(n_classes, dim);
        let mut gb = Tensor::zeros(n_classes, 1);
        for &i in train_idx {
            let p = w.matmul(&features[i]).add(&b).softmax();
            let mut diff = p;
            diff.data_mut()[labels[i]] -= 1.0;
            gw.add_assign(&diff.matmul(&features[i].transpose()));
            gb.add_assign(&diff);
        }
        gw = gw.scale(inv_n);
        gb = gb.scale(inv_n);
        let mut params = [&mut w, &mut b];
        adam.step(&mut params, &mut [gw, gb]);
    }

    let correct = test_idx
        .iter()
        .filter(|&&i| w.matmul(&features[i]).add(&b).softmax().argmax() == labels[i])
        .count();
    correct as f64 / test_idx.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_desk_corpus, train_tokenizer};
    use crate::graph::{max_relative_error, numeric_gradient};
    use proptest::prelude::*;
    use rand::Rng;

    fn unit(v: &[f64]) -> Tensor {
        let t = Tensor::vector(v);
        let n = t.norm();
        t.scale(1.0 / n)
    }

    #[test]
    fn recon_loss_is_zero_when_positives_fill_the_margin() {
        // d . h = 1 and d . n = 0 makes every hinge argument exactly zero.
        let d_a = unit(&[1.0, 0.0, 0.0]);
        let d_s = unit(&[0.0, 1.0, 0.0]);
        let negs: Vec<(Tensor, Tensor)> = (0..3)
            .map(|_| (Tensor::vector(&[0.0, 1.0, 0.0]), Tensor::vector(&[1.0, 0.0, 0.0])))
            .collect();
        let loss = recon_loss(&d_a, &d_s, &d_a, &d_s, &negs);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn recon_loss_is_two_m_when_negatives_equal_positives() {
        // Identical positive and negative encodings leave the bare margin,
        // one per hinge term: m aspect terms plus m sentiment terms.
        let h = Tensor::vector(&[0.3, -0.2, 0.9]);
        for m in [1usize, 4, 7] {
            let negs: Vec<(Tensor, Tensor)> =
                (0..m).map(|_| (h.clone(), h.clone())).collect();
            let loss = recon_loss(&h, &h, &h, &h, &negs);
            assert_eq!(loss, 2.0 * m as f64);
        }
    }

    #[test]
    fn ortho_regularizer_vanishes_for_orthonormal_rows() {
        let eye = Tensor::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(ortho_regularizer(&eye, &eye), 0.0);
        // Row scaling is removed by normalization.
        let scaled = eye.scale(7.5);
        assert!(ortho_regularizer(&scaled, &eye) < 1e-12);
    }

    #[test]
    fn ortho_regularizer_is_sqrt_two_for_a_duplicated_unit_row() {
        let dup = Tensor::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]);
        let eye = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let got = ortho_regularizer(&dup, &eye);
        assert!((got - 2.0_f64.sqrt()).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn disentangle_loss_on_uniform_heads_is_twice_log_k() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut model = InductionModel::new(12, 3, 5, 8, &mut rng);
        // Zero adversary weights give a uniform adversarial distribution.
        model.w_adv = Tensor::zeros(5, 4);
        model.b_adv = Tensor::zeros(5, 1);
        let h_a = Tensor::vector(&[0.1, -0.3, 0.5, 0.2]);
        let p_s = vec![0.2; 5];
        let got = model.disentangle_loss(&h_a, &p_s, 3);
        let want = 2.0 * 5.0_f64.ln();
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn reconstruction_is_linear_in_the_plan() {
        let mut rng = StdRng::seed_from_u64(2);
        let model = InductionModel::new(10, 4, 3, 8, &mut rng);
        let p1 = ContentPlan::new(vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]).unwrap();
        let p2 = ContentPlan::new(vec![0.0, 0.1, 0.2, 0.7], vec![0.5, 0.0, 0.5]).unwrap();
        let alpha = 0.3;
        let mix = ContentPlan::new(
            p1.p_a.iter().zip(&p2.p_a).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect(),
            p1.p_s.iter().zip(&p2.p_s).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect(),
        )
        .unwrap();
        let (d1a, d1s) = model.reconstruct(&p1);
        let (d2a, d2s) = model.reconstruct(&p2);
        let (dma, dms) = model.reconstruct(&mix);
        let want_a = d1a.scale(alpha).add(&d2a.scale(1.0 - alpha));
        let want_s = d1s.scale(alpha).add(&d2s.scale(1.0 - alpha));
        for (got, want) in [(&dma, &want_a), (&dms, &want_s)] {
            for (x, y) in got.data().iter().zip(want.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_pools_the_directional_halves() {
        let mut rng = StdRng::seed_from_u64(3);
        let model = InductionModel::new(20, 3, 2, 12, &mut rng);
        let enc = model.encode(&[5, 9, 17, 2]);
        let half = 6;
        let n = enc.token_states.len() as f64;
        for r in 0..half {
            let mean_f: f64 =
                enc.token_states.iter().map(|t| t.get(r, 0)).sum::<f64>() / n;
            let mean_b: f64 =
                enc.token_states.iter().map(|t| t.get(half + r, 0)).sum::<f64>() / n;
            assert_eq!(mean_f, enc.h_a.get(r, 0));
            assert_eq!(mean_b, enc.h_s.get(r, 0));
        }
    }

    #[test]
    fn encode_is_order_sensitive() {
        let mut rng = StdRng::seed_from_u64(4);
        let model = InductionModel::new(20, 3, 2, 12, &mut rng);
        let a = model.encode(&[5, 9, 17]);
        let b = model.encode(&[17, 9, 5]);
        let diff: f64 =
            a.h_a.data().iter().zip(b.h_a.data()).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-9, "forward pooling ignored token order");
    }

    fn set_params(model: &mut InductionModel, values: &[Tensor]) {
        let mut params = model.named_params_mut();
        assert_eq!(params.len(), values.len());
        for (slot, v) in params.iter_mut().zip(values) {
            *slot.1 = v.clone();
        }
    }

    fn micro_batch() -> (Vec<BatchItem>, Vec<Vec<usize>>) {
        let items = vec![
            BatchItem { tokens: vec![5, 7, 9], label: 1 },
            BatchItem { tokens: vec![6, 8, 10, 11], label: 0 },
        ];
        let negatives = vec![vec![1], vec![0]];
        (items, negatives)
    }

    #[test]
    fn batch_loss_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        let model = InductionModel::new(12, 3, 2, 8, &mut rng);
        let (items, negatives) = micro_batch();
        let lambda = 0.7;

        let loss_of = |values: &[Tensor]| -> f64 {
            let mut m = model.clone();
            set_params(&mut m, values);
            let mut g = Graph::new();
            let ids = insert_params(&mut g, &m);
            let refs: Vec<&BatchItem> = items.iter().collect();
            let loss =
                build_batch_loss(&mut g, &ids, &m, &refs, &negatives, lambda, false, None);
            g.scalar(loss.total)
        };

        let params: Vec<Tensor> =
            model.named_params().iter().map(|(_, t)| (*t).clone()).collect();
        let numeric = numeric_gradient(&params, 1e-5, loss_of);

        let mut g = Graph::new();
        let ids = insert_params(&mut g, &model);
        let refs: Vec<&BatchItem> = items.iter().collect();
        let loss =
            build_batch_loss(&mut g, &ids, &model, &refs, &negatives, lambda, false, None);
        g.backward(loss.total);
        let analytic: Vec<Tensor> = ids
            .ordered()
            .iter()
            .zip(params.iter())
            .map(|(&id, p)| g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
            .collect();

        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_reversal_negates_encoder_gradients_only() {
        let mut rng = StdRng::seed_from_u64(12);
        let model = InductionModel::new(12, 3, 2, 8, &mut rng);
        let tokens = [5u32, 7, 9];

        let grads_for = |reversed: bool| -> Vec<Tensor> {
            let mut g = Graph::new();
            let ids = insert_params(&mut g, &model);
            let loss = build_adversarial_ce(&mut g, &ids, &tokens, 1, reversed);
            g.backward(loss);
            ids.ordered()
                .iter()
                .zip(model.named_params().iter())
                .map(|(&id, (_, t))| {
                    g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
                })
                .collect()
        };
        let with = grads_for(true);
        let without = grads_for(false);

        let names: Vec<&str> = model.named_params().iter().map(|(n, _)| *n).collect();
        for ((name, w), wo) in names.iter().zip(&with).zip(&without) {
            for (a, b) in w.data().iter().zip(wo.data()) {
                match *name {
                    // The adversary head sits above the reversal layer and
                    // keeps its ordinary gradient.
                    "w_adv" | "b_adv" => assert!((a - b).abs() < 1e-12, "{name}"),
                    // Everything below the reversal sees the sign flipped.
                    _ => assert!((a + b).abs() < 1e-12, "{name}: {a} vs {b}"),
                }
            }
        }
        // The encoder gradient is actually nonzero, so the sign check bites.
        let emb_norm = with[0].norm();
        assert!(emb_norm > 1e-12);
    }

    #[test]
    fn zero_lambda_excludes_the_regularizer_exactly() {
        let mut rng = StdRng::seed_from_u64(13);
        let model = InductionModel::new(12, 3, 2, 8, &mut rng);
        let (items, negatives) = micro_batch();
        let refs: Vec<&BatchItem> = items.iter().collect();

        let mut g = Graph::new();
        let ids = insert_params(&mut g, &model);
        let loss = build_batch_loss(&mut g, &ids, &model, &refs, &negatives, 0.0, true, None);
        assert!(loss.regularizer.is_none());
        let parts = g.scalar(loss.recon_mean) + g.scalar(loss.disen_mean);
        assert_eq!(g.scalar(loss.total), parts);
    }

    fn tiny_training_setup(
        entities: usize,
        reviews: usize,
    ) -> (Vec<ReviewRecord>, Vocabulary) {
        let desk = generate_desk_corpus(entities, reviews, 99);
        let texts: Vec<&str> = desk.records.iter().map(|r| r.text.as_str()).collect();
        let vocab = train_tokenizer(&texts, 400);
        (desk.records, vocab)
    }

    #[test]
    fn training_reduces_the_objective() {
        let (records, vocab) = tiny_training_setup(4, 8);
        let cfg = InductionConfig {
            k_aspects: 4,
            hidden: 16,
            negatives: 2,
            lambda: 1.0,
            lr: 3e-3,
            batch_size: 8,
            warmup_steps: 5,
            dropout: 0.0,
            max_epochs: 3,
            grad_clip: 3.0,
            dev_fraction: 0.1,
            emb_init: 0.1,
        };
        let (model, report) =
            train_induction(&records, &vocab, RatingScale::OneToFive, &cfg, 7).unwrap();
        let items = prepare_items(&records, &vocab, RatingScale::OneToFive).unwrap().items;
        let all: Vec<usize> = (0..items.len()).collect();
        let final_loss = eval_subset(&model, &items, &all, cfg.negatives, cfg.lambda, false);
        assert!(
            final_loss < report.initial_loss,
            "loss went from {} to {final_loss}",
            report.initial_loss
        );
        assert_eq!(report.epoch_losses.len(), 3);
        assert!(report.best_epoch >= 1 && report.best_epoch <= 3);
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let (records, vocab) = tiny_training_setup(2, 6);
        let cfg = InductionConfig {
            k_aspects: 3,
            hidden: 8,
            negatives: 2,
            lambda: 0.5,
            lr: 1e-3,
            batch_size: 6,
            warmup_steps: 2,
            dropout: 0.1,
            max_epochs: 2,
            grad_clip: 3.0,
            dev_fraction: 0.1,
            emb_init: 0.1,
        };
        let (m1, r1) =
            train_induction(&records, &vocab, RatingScale::OneToFive, &cfg, 21).unwrap();
        let (m2, r2) =
            train_induction(&records, &vocab, RatingScale::OneToFive, &cfg, 21).unwrap();
        assert_eq!(r1.epoch_losses, r2.epoch_losses);
        assert_eq!(r1.dev_losses, r2.dev_losses);
        for ((n1, t1), (_, t2)) in m1.named_params().iter().zip(m2.named_params().iter()) {
            assert_eq!(t1.data(), t2.data(), "parameter {n1} diverged");
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = StdRng::seed_from_u64(31);
        let model = InductionModel::new(15, 4, 5, 12, &mut rng);
        model.save(dir.path(), "cafebabe", 1.25, 3).unwrap();
        let (loaded, meta) = InductionModel::load(dir.path()).unwrap();
        for ((n1, t1), (_, t2)) in model.named_params().iter().zip(loaded.named_params().iter()) {
            assert_eq!(t1.data(), t2.data(), "parameter {n1} changed");
        }
        assert_eq!(meta["vocab_sha256"], "cafebabe");
        assert_eq!(meta["epoch"], 3);
        assert_eq!(loaded.k_sentiments, 5);
    }

    #[test]
    fn loading_a_foreign_checkpoint_fails() {
        let dir = tempfile::tempdir().unwrap();
        checkpoint::save_params(dir.path(), &[], &serde_json::json!({"kind": "other"})).unwrap();
        assert!(matches!(
            InductionModel::load(dir.path()),
            Err(InductionError::WrongKind(_))
        ));
    }

    #[test]
    fn cluster_purity_counts_majority_labels() {
        let purity = cluster_purity(&[0, 0, 0, 1, 1], &[0, 1, 0, 1, 1]);
        assert!((purity - 0.8).abs() < 1e-12);
        assert_eq!(cluster_purity(&[0, 1, 2], &[2, 0, 1]), 1.0);
    }

    #[test]
    fn probe_separates_linearly_separable_features() {
        let mut rng = StdRng::seed_from_u64(41);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = i % 2;
            let offset = if class == 0 { 1.0 } else { -1.0 };
            let noise: f64 = rng.gen_range(-0.2..0.2);
            features.push(Tensor::vector(&[offset + noise, noise * 0.5]));
            labels.push(class);
        }
        let acc = probe_accuracy(&features, &labels, 2, 5);
        assert_eq!(acc, 1.0);
    }

    proptest! {
        #[test]
        fn inferred_plans_are_valid_simplices(
            tokens in proptest::collection::vec(0u32..20, 1..12),
            seed in 0u64..500,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let model = InductionModel::new(20, 5, 3, 8, &mut rng);
            let plan = model.infer_plan(&tokens);
            let sum_a: f64 = plan.p_a.iter().sum();
            let sum_s: f64 = plan.p_s.iter().sum();
            prop_assert!((sum_a - 1.0).abs() < 1e-9);
            prop_assert!((sum_s - 1.0).abs() < 1e-9);
            prop_assert!(plan.p_a.iter().all(|&p| p >= 0.0));
            prop_assert!(plan.p_s.iter().all(|&p| p >= 0.0));
        }
    }
}
