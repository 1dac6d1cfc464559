//! Feature interaction module: each dimension of the leaf one-hot vector owns
//! an embedding and a linear weight vector; active pairs are scored by a
//! small attention net and their element-wise embedding products are pooled
//! with softmax weights into the dense representation h_aug.
//!
//! For one sample with active set I and pairs (i,j), i<j:
//!
//! ```text
//! v_ij   = (h_i ⊙ h_j) · x_i · x_j
//! z_ij   = ω_attn · v_ij + b_attn
//! a'_ij  = q · relu(z_ij)
//! a_ij   = softmax over pairs of a'_ij
//! h_aug  = Σ_{i∈I} w_i · x_i + Σ_{ij} a_ij · v_ij
//! ```
//!
//! Binary encodings make every x_i · x_j factor 1; fractional inputs follow
//! the same formulas literally. The backward pass is hand-derived, including
//! the softmax coupling; ReLU and |·| subgradients at 0 are 0.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::rng_from;
use crate::scalar::{sign, Real};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FaimParams<R> {
    /// total_dim × p linear weight vectors w_i.
    pub linear: Vec<Vec<R>>,
    /// total_dim × p embeddings h_i.
    pub emb: Vec<Vec<R>>,
    /// p × p attention weight ω_attn.
    pub attn_w: Vec<Vec<R>>,
    /// p attention bias b_attn.
    pub attn_b: Vec<R>,
    /// p attention projection q.
    pub attn_q: Vec<R>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSet {
    /// Sorted indices of the non-zero dimensions.
    pub active: Vec<usize>,
    /// All (i, j) with i < j, both active, lexicographic order.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionWeights<R> {
    /// Pre-softmax scores a'_ij, one per pair.
    pub logits: Vec<R>,
    /// Softmax weights a_ij, one per pair.
    pub weights: Vec<R>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseMode {
    /// Σ|a_ij| over softmax outputs: constant 1 per sample with pairs, zero
    /// analytic gradient. Kept for fidelity runs.
    Literal,
    /// Σ|a'_ij| over pre-softmax scores; the default training mode.
    LogitL1,
}

/// Per-sample forward state needed by the backward pass.
#[derive(Clone, Debug)]
pub struct FaimCache<R> {
    /// v_ij per pair.
    pub v: Vec<Vec<R>>,
    /// z_ij per pair.
    pub z: Vec<Vec<R>>,
    /// relu(z_ij) per pair.
    pub r: Vec<Vec<R>>,
    pub attention: AttentionWeights<R>,
    pub h_aug: Vec<R>,
}

impl<R: Real> FaimParams<R> {
    /// Embeddings, linear weights, ω_attn, and q from N(0, 0.1); b_attn zero.
    pub fn init(total_dim: usize, p: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0f64, 0.1).expect("valid std");
        let mut matrix = |rows: usize, cols: usize| -> Vec<Vec<R>> {
            (0..rows)
                .map(|_| (0..cols).map(|_| R::of(normal.sample(&mut rng))).collect())
                .collect()
        };
        FaimParams {
            linear: matrix(total_dim, p),
            emb: matrix(total_dim, p),
            attn_w: matrix(p, p),
            attn_b: vec![R::zero(); p],
            attn_q: (0..p).map(|_| R::of(normal.sample(&mut rng))).collect(),
        }
    }

    pub fn total_dim(&self) -> usize {
        self.linear.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.attn_q.len()
    }

    pub fn zeros_like(&self) -> FaimParams<R> {
        FaimParams {
            linear: self.linear.iter().map(|r| vec![R::zero(); r.len()]).collect(),
            emb: self.emb.iter().map(|r| vec![R::zero(); r.len()]).collect(),
            attn_w: self.attn_w.iter().map(|r| vec![R::zero(); r.len()]).collect(),
            attn_b: vec![R::zero(); self.attn_b.len()],
            attn_q: vec![R::zero(); self.attn_q.len()],
        }
    }

    pub fn n_params(&self) -> usize {
        let p = self.embed_dim();
        2 * self.total_dim() * p + p * p + 2 * p
    }

    pub fn write_flat(&self, out: &mut Vec<R>) {
        for row in &self.linear {
            out.extend_from_slice(row);
        }
        for row in &self.emb {
            out.extend_from_slice(row);
        }
        for row in &self.attn_w {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.attn_b);
        out.extend_from_slice(&self.attn_q);
    }

    pub fn read_flat(&mut self, src: &[R]) -> usize {
        let mut k = 0;
        let take_rows = |rows: &mut Vec<Vec<R>>, k: &mut usize| {
            for row in rows {
                for v in row {
                    *v = src[*k];
                    *k += 1;
                }
            }
        };
        take_rows(&mut self.linear, &mut k);
        take_rows(&mut self.emb, &mut k);
        take_rows(&mut self.attn_w, &mut k);
        for v in &mut self.attn_b {
            *v = src[k];
            k += 1;
        }
        for v in &mut self.attn_q {
            *v = src[k];
            k += 1;
        }
        k
    }
}

/// Enumerates non-zero indices and their unordered pairs.
pub fn active_pairs<R: Real>(x: &[R]) -> InteractionSet {
    let active: Vec<usize> = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != R::zero())
        .map(|(i, _)| i)
        .collect();
    let mut pairs = Vec::with_capacity(active.len() * active.len().saturating_sub(1) / 2);
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            pairs.push((i, j));
        }
    }
    InteractionSet { active, pairs }
}

fn softmax<R: Real>(logits: &[R]) -> Vec<R> {
    let max = logits.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<R> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(R::zero(), |acc, &e| acc + e);
    exps.into_iter().map(|e| e / sum).collect()
}

/// v_ij, z_ij, r_ij, a'_ij for one pair.
fn pair_forward<R: Real>(
    params: &FaimParams<R>,
    i: usize,
    j: usize,
    scale: R,
) -> (Vec<R>, Vec<R>, Vec<R>, R) {
    let p = params.embed_dim();
    let mut v = vec![R::zero(); p];
    for k in 0..p {
        v[k] = params.emb[i][k] * params.emb[j][k] * scale;
    }
    let mut z = vec![R::zero(); p];
    let mut r = vec![R::zero(); p];
    let mut logit = R::zero();
    for k in 0..p {
        let mut acc = params.attn_b[k];
        for (l, &vl) in v.iter().enumerate() {
            acc = acc + params.attn_w[k][l] * vl;
        }
        z[k] = acc;
        r[k] = acc.max(R::zero());
        logit = logit + params.attn_q[k] * r[k];
    }
    (v, z, r, logit)
}

/// Attention scores and softmax weights for binary-activation pairs
/// (x_i x_j = 1). Errors when the pair list is empty; interaction-free
/// samples must be handled by the caller.
pub fn attention_forward<R: Real>(
    params: &FaimParams<R>,
    iset: &InteractionSet,
) -> Result<AttentionWeights<R>> {
    if iset.pairs.is_empty() {
        return Err(CoreError::EmptyInput("no active pairs".into()));
    }
    let logits: Vec<R> = iset
        .pairs
        .iter()
        .map(|&(i, j)| pair_forward(params, i, j, R::one()).3)
        .collect();
    let weights = softmax(&logits);
    Ok(AttentionWeights { logits, weights })
}

/// Full forward for one sample with a precomputed interaction set.
pub fn forward_sample<R: Real>(
    params: &FaimParams<R>,
    x: &[R],
    iset: &InteractionSet,
) -> FaimCache<R> {
    let p = params.embed_dim();
    let n_pairs = iset.pairs.len();
    let mut v = Vec::with_capacity(n_pairs);
    let mut z = Vec::with_capacity(n_pairs);
    let mut r = Vec::with_capacity(n_pairs);
    let mut logits = Vec::with_capacity(n_pairs);
    for &(i, j) in &iset.pairs {
        let (vi, zi, ri, li) = pair_forward(params, i, j, x[i] * x[j]);
        v.push(vi);
        z.push(zi);
        r.push(ri);
        logits.push(li);
    }
    let weights = if n_pairs == 0 { Vec::new() } else { softmax(&logits) };

    let mut h_aug = vec![R::zero(); p];
    for &i in &iset.active {
        for k in 0..p {
            h_aug[k] = h_aug[k] + params.linear[i][k] * x[i];
        }
    }
    for (pair, vp) in v.iter().enumerate() {
        for k in 0..p {
            h_aug[k] = h_aug[k] + weights[pair] * vp[k];
        }
    }
    FaimCache { v, z, r, attention: AttentionWeights { logits, weights }, h_aug }
}

/// h_aug for one sample; derives the interaction set from the non-zero
/// entries of x.
pub fn faim_forward<R: Real>(params: &FaimParams<R>, x: &[R]) -> Vec<R> {
    forward_sample(params, x, &active_pairs(x)).h_aug
}

/// Per-sample sparse penalty over computed attention values.
pub fn sparse_penalty<R: Real>(attention: &AttentionWeights<R>, mode: SparseMode) -> R {
    match mode {
        SparseMode::Literal => attention
            .weights
            .iter()
            .fold(R::zero(), |acc, &a| acc + a.abs()),
        SparseMode::LogitL1 => attention
            .logits
            .iter()
            .fold(R::zero(), |acc, &l| acc + l.abs()),
    }
}

/// Accumulates parameter gradients for one sample.
///
/// `d_h_aug` is ∂L/∂h_aug. `d_sparse` scales the penalty's own gradient: it
/// is the coefficient multiplying Σ|a'_ij| in the loss for
/// [`SparseMode::LogitL1`], and ignored for [`SparseMode::Literal`] whose
/// analytic gradient is identically zero (softmax outputs always sum to 1).
pub fn backward_sample<R: Real>(
    params: &FaimParams<R>,
    x: &[R],
    iset: &InteractionSet,
    cache: &FaimCache<R>,
    d_h_aug: &[R],
    d_sparse: R,
    mode: SparseMode,
    grads: &mut FaimParams<R>,
) {
    let p = params.embed_dim();

    for &i in &iset.active {
        for k in 0..p {
            grads.linear[i][k] = grads.linear[i][k] + d_h_aug[k] * x[i];
        }
    }
    if iset.pairs.is_empty() {
        return;
    }

    // Softmax coupling: d a'_ij = a_ij (c_ij − Σ a_kl c_kl), c_ij = u · v_ij.
    let weights = &cache.attention.weights;
    let c: Vec<R> = cache
        .v
        .iter()
        .map(|vp| vp.iter().zip(d_h_aug).fold(R::zero(), |acc, (&v, &u)| acc + v * u))
        .collect();
    let s_total = weights
        .iter()
        .zip(&c)
        .fold(R::zero(), |acc, (&a, &ci)| acc + a * ci);

    let mut d_v = vec![R::zero(); p];
    for (pair, &(i, j)) in iset.pairs.iter().enumerate() {
        let mut d_logit = weights[pair] * (c[pair] - s_total);
        if mode == SparseMode::LogitL1 && d_sparse != R::zero() {
            d_logit = d_logit + d_sparse * sign(cache.attention.logits[pair]);
        }

        // Through the attention net: q, relu, ω_attn, b_attn, and into v.
        let scale = x[i] * x[j];
        for k in 0..p {
            d_v[k] = weights[pair] * d_h_aug[k];
        }
        if d_logit != R::zero() {
            for k in 0..p {
                grads.attn_q[k] = grads.attn_q[k] + d_logit * cache.r[pair][k];
                let dz = if cache.z[pair][k] > R::zero() {
                    d_logit * params.attn_q[k]
                } else {
                    R::zero()
                };
                if dz != R::zero() {
                    grads.attn_b[k] = grads.attn_b[k] + dz;
                    for l in 0..p {
                        grads.attn_w[k][l] = grads.attn_w[k][l] + dz * cache.v[pair][l];
                        d_v[l] = d_v[l] + dz * params.attn_w[k][l];
                    }
                }
            }
        }

        for k in 0..p {
            let dvk = d_v[k] * scale;
            grads.emb[i][k] = grads.emb[i][k] + dvk * params.emb[j][k];
            grads.emb[j][k] = grads.emb[j][k] + dvk * params.emb[i][k];
        }
    }
}

/// Batch gradients of the h_aug map given per-sample upstreams ∂L/∂h_aug.
pub fn faim_gradients<R: Real>(
    params: &FaimParams<R>,
    batch: &[Vec<R>],
    upstream: &[Vec<R>],
) -> FaimParams<R> {
    debug_assert_eq!(batch.len(), upstream.len());
    let mut grads = params.zeros_like();
    for (x, u) in batch.iter().zip(upstream) {
        let iset = active_pairs(x);
        let cache = forward_sample(params, x, &iset);
        backward_sample(params, x, &iset, &cache, u, R::zero(), SparseMode::Literal, &mut grads);
    }
    grads
}
