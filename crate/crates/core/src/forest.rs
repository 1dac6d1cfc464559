//! Decision-tree ensembles: gradient-boosted trees for binary classification,
//! the leaf-membership one-hot encoding (`x_aug`) derived from them, and a
//! bootstrap random forest whose per-tree leaf probabilities serve as the
//! augmented features of one ablation variant.
//!
//! Everything here is deterministic: split search scans exact midpoints of
//! sorted unique values with ties broken by lowest feature index then lowest
//! threshold, and the forest's only randomness comes from the seed embedded
//! in its config.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::{clamp_prob, sigmoid, Real};

const MIN_GAIN: f64 = 1e-12;
const NEWTON_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum TreeNode<R> {
    Split {
        feature: usize,
        threshold: R,
        left: Box<TreeNode<R>>,
        right: Box<TreeNode<R>>,
    },
    Leaf {
        id: usize,
        value: R,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tree<R> {
    pub root: TreeNode<R>,
    pub n_leaves: usize,
}

impl<R: Real> Tree<R> {
    /// Routes x to its leaf; `x[feature] <= threshold` goes left.
    pub fn leaf_of(&self, x: &[R]) -> (usize, R) {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { id, value } => return (*id, *value),
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn value_of(&self, x: &[R]) -> R {
        self.leaf_of(x).1
    }
}

// ---------------------------------------------------------------------------
// Split search
// ---------------------------------------------------------------------------

/// Best squared-error split of `idx` on feature `j`: returns (threshold,
/// gain) with gain = sum_L²/n_L + sum_R²/n_R − sum²/n over `targets`.
fn scan_squared_error<R: Real>(
    features: &[Vec<R>],
    targets: &[f64],
    idx: &[usize],
    j: usize,
    min_leaf: usize,
) -> Option<(R, f64)> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| features[a][j].partial_cmp(&features[b][j]).expect("finite"));
    let n = order.len();
    let total: f64 = order.iter().map(|&i| targets[i]).sum();
    let base = total * total / n as f64;

    let mut left = 0.0;
    let mut best: Option<(R, f64)> = None;
    for k in 0..n - 1 {
        left += targets[order[k]];
        let n_l = k + 1;
        let n_r = n - n_l;
        if n_l < min_leaf || n_r < min_leaf {
            continue;
        }
        let lo = features[order[k]][j];
        let hi = features[order[k + 1]][j];
        if lo == hi {
            continue;
        }
        let right = total - left;
        let gain = left * left / n_l as f64 + right * right / n_r as f64 - base;
        if best.map_or(gain > MIN_GAIN, |(_, g)| gain > g) {
            best = Some(((lo + hi) / R::of(2.0), gain));
        }
    }
    best
}

/// Best Gini split of `idx` on feature `j` over binary `labels`.
fn scan_gini<R: Real>(
    features: &[Vec<R>],
    labels: &[u8],
    idx: &[usize],
    j: usize,
    min_leaf: usize,
) -> Option<(R, f64)> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| features[a][j].partial_cmp(&features[b][j]).expect("finite"));
    let n = order.len();
    let pos_total: usize = order.iter().map(|&i| labels[i] as usize).sum();
    let gini = |pos: f64, count: f64| {
        let p = pos / count;
        1.0 - p * p - (1.0 - p) * (1.0 - p)
    };
    let parent = gini(pos_total as f64, n as f64);

    let mut pos_left = 0usize;
    let mut best: Option<(R, f64)> = None;
    for k in 0..n - 1 {
        pos_left += labels[order[k]] as usize;
        let n_l = k + 1;
        let n_r = n - n_l;
        if n_l < min_leaf || n_r < min_leaf {
            continue;
        }
        let lo = features[order[k]][j];
        let hi = features[order[k + 1]][j];
        if lo == hi {
            continue;
        }
        let w_l = n_l as f64 / n as f64;
        let w_r = n_r as f64 / n as f64;
        let gain = parent
            - w_l * gini(pos_left as f64, n_l as f64)
            - w_r * gini((pos_total - pos_left) as f64, n_r as f64);
        if best.map_or(gain > MIN_GAIN, |(_, g)| gain > g) {
            best = Some(((lo + hi) / R::of(2.0), gain));
        }
    }
    best
}

fn partition<R: Real>(
    features: &[Vec<R>],
    idx: &[usize],
    feature: usize,
    threshold: R,
) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in idx {
        if features[i][feature] <= threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

/// Regression tree on `targets` with Newton leaf values Σtarget / max(Σhess,
/// floor); used for the boosting stages.
fn build_regression_node<R: Real>(
    features: &[Vec<R>],
    targets: &[f64],
    hessians: &[f64],
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    next_leaf: &mut usize,
) -> TreeNode<R> {
    let make_leaf = |next_leaf: &mut usize| {
        let sum: f64 = idx.iter().map(|&i| targets[i]).sum();
        let hess: f64 = idx.iter().map(|&i| hessians[i]).sum();
        let id = *next_leaf;
        *next_leaf += 1;
        TreeNode::Leaf { id, value: R::of(sum / hess.max(NEWTON_FLOOR)) }
    };

    let pure = idx.windows(2).all(|w| targets[w[0]] == targets[w[1]]);
    if depth == max_depth || idx.len() < 2 * min_leaf || pure {
        return make_leaf(next_leaf);
    }
    let d = features[0].len();
    let mut best: Option<(usize, R, f64)> = None;
    for j in 0..d {
        if let Some((thr, gain)) = scan_squared_error(features, targets, idx, j, min_leaf) {
            if best.map_or(true, |(_, _, g)| gain > g) {
                best = Some((j, thr, gain));
            }
        }
    }
    match best {
        None => make_leaf(next_leaf),
        Some((feature, threshold, _)) => {
            let (left_idx, right_idx) = partition(features, idx, feature, threshold);
            let left = build_regression_node(
                features, targets, hessians, &left_idx, depth + 1, max_depth, min_leaf, next_leaf,
            );
            let right = build_regression_node(
                features, targets, hessians, &right_idx, depth + 1, max_depth, min_leaf, next_leaf,
            );
            TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
        }
    }
}

/// Gini classification tree over a random feature subset per node; leaf
/// values are class-1 frequencies.
fn build_gini_node<R: Real>(
    features: &[Vec<R>],
    labels: &[u8],
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    n_candidates: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    next_leaf: &mut usize,
) -> TreeNode<R> {
    let pos: usize = idx.iter().map(|&i| labels[i] as usize).sum();
    let make_leaf = |next_leaf: &mut usize| {
        let id = *next_leaf;
        *next_leaf += 1;
        TreeNode::Leaf { id, value: R::of(pos as f64 / idx.len() as f64) }
    };

    if depth == max_depth || idx.len() < 2 * min_leaf || pos == 0 || pos == idx.len() {
        return make_leaf(next_leaf);
    }
    let d = features[0].len();
    let candidates = rand::seq::index::sample(rng, d, n_candidates.min(d)).into_vec();
    let mut sorted = candidates;
    sorted.sort_unstable();

    let mut best: Option<(usize, R, f64)> = None;
    for &j in &sorted {
        if let Some((thr, gain)) = scan_gini(features, labels, idx, j, min_leaf) {
            if best.map_or(true, |(_, _, g)| gain > g) {
                best = Some((j, thr, gain));
            }
        }
    }
    match best {
        None => make_leaf(next_leaf),
        Some((feature, threshold, _)) => {
            let (left_idx, right_idx) = partition(features, idx, feature, threshold);
            let left = build_gini_node(
                features, labels, &left_idx, depth + 1, max_depth, min_leaf, n_candidates, rng,
                next_leaf,
            );
            let right = build_gini_node(
                features, labels, &right_idx, depth + 1, max_depth, min_leaf, n_candidates, rng,
                next_leaf,
            );
            TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
        }
    }
}

// ---------------------------------------------------------------------------
// GBDT
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GbdtConfig {
    /// Number of trees; `None` means floor(d/2).
    pub n_trees: Option<usize>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub shrinkage: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig { n_trees: None, max_depth: 8, min_samples_leaf: 2, shrinkage: 0.3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GbdtModel<R> {
    pub trees: Vec<Tree<R>>,
    /// Prior log-odds log(p̄ / (1 − p̄)).
    pub base_score: R,
    pub shrinkage: R,
    pub n_features: usize,
    pub config: GbdtConfig,
}

/// Fit result: the model plus the training logistic loss recorded before any
/// tree and after each added tree.
#[derive(Clone, Debug)]
pub struct GbdtFit<R> {
    pub model: GbdtModel<R>,
    pub train_loss: Vec<f64>,
}

fn validate_training_data<R: Real>(features: &[Vec<R>], labels: &[u8]) -> Result<usize> {
    if features.is_empty() {
        return Err(CoreError::EmptyInput("no training rows".into()));
    }
    if features.len() != labels.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "{} rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let d = features[0].len();
    if d == 0 {
        return Err(CoreError::EmptyInput("rows have no features".into()));
    }
    for row in features {
        if row.len() != d {
            return Err(CoreError::DimensionMismatch("ragged feature matrix".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Invalid("non-finite feature value".into()));
        }
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(CoreError::Invalid("labels must be 0 or 1".into()));
    }
    Ok(d)
}

fn mean_logistic_loss<R: Real>(logits: &[R], labels: &[u8]) -> f64 {
    let n = labels.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let p = clamp_prob(sigmoid(z)).as_f64();
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// Logistic-loss gradient boosting: each tree fits the residual y − p with
/// squared-error splits, leaf values are Newton steps Σ(y−p)/Σp(1−p), and the
/// ensemble accumulates them scaled by the shrinkage.
pub fn fit_gbdt<R: Real>(
    features: &[Vec<R>],
    labels: &[u8],
    config: &GbdtConfig,
) -> Result<GbdtFit<R>> {
    let d = validate_training_data(features, labels)?;
    let n = features.len();
    if n < 2 * config.min_samples_leaf {
        return Err(CoreError::Invalid(format!(
            "need at least {} rows, got {n}",
            2 * config.min_samples_leaf
        )));
    }
    let n_trees = config.n_trees.unwrap_or(d / 2);

    let p_bar = labels.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
    let p_bar = p_bar.clamp(1e-7, 1.0 - 1e-7);
    let base_score = R::of((p_bar / (1.0 - p_bar)).ln());

    let mut logits = vec![base_score; n];
    let mut train_loss = vec![mean_logistic_loss(&logits, labels)];
    let shrinkage = R::of(config.shrinkage);
    let idx: Vec<usize> = (0..n).collect();

    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let mut targets = vec![0.0f64; n];
        let mut hessians = vec![0.0f64; n];
        for i in 0..n {
            let p = sigmoid(logits[i]).as_f64();
            targets[i] = labels[i] as f64 - p;
            hessians[i] = p * (1.0 - p);
        }
        let mut next_leaf = 0;
        let root = build_regression_node::<R>(
            features,
            &targets,
            &hessians,
            &idx,
            0,
            config.max_depth,
            config.min_samples_leaf,
            &mut next_leaf,
        );
        let tree = Tree { root, n_leaves: next_leaf };
        for i in 0..n {
            logits[i] = logits[i] + shrinkage * tree.value_of(&features[i]);
        }
        train_loss.push(mean_logistic_loss(&logits, labels));
        trees.push(tree);
    }

    Ok(GbdtFit {
        model: GbdtModel { trees, base_score, shrinkage, n_features: d, config: *config },
        train_loss,
    })
}

pub fn gbdt_predict_logit<R: Real>(model: &GbdtModel<R>, x: &[R]) -> R {
    let mut z = model.base_score;
    for tree in &model.trees {
        z = z + model.shrinkage * tree.value_of(x);
    }
    z
}

pub fn gbdt_predict_proba<R: Real>(model: &GbdtModel<R>, x: &[R]) -> R {
    sigmoid(gbdt_predict_logit(model, x))
}

// ---------------------------------------------------------------------------
// Leaf one-hot encoding
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafEncoding {
    /// Prefix sums of per-tree leaf counts; length T+1, last entry total_dim.
    pub block_offsets: Vec<usize>,
    pub total_dim: usize,
}

pub fn leaf_encoding<R>(model: &GbdtModel<R>) -> LeafEncoding {
    let mut offsets = Vec::with_capacity(model.trees.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for tree in &model.trees {
        acc += tree.n_leaves;
        offsets.push(acc);
    }
    LeafEncoding { block_offsets: offsets, total_dim: acc }
}

/// One-hot leaf membership: bit block_offsets[t] + leaf_id_t(x) set per tree,
/// so exactly T ones.
pub fn leaf_one_hot<R: Real>(model: &GbdtModel<R>, x: &[R]) -> Vec<R> {
    let enc = leaf_encoding(model);
    let mut out = vec![R::zero(); enc.total_dim];
    for (t, tree) in model.trees.iter().enumerate() {
        let (leaf, _) = tree.leaf_of(x);
        out[enc.block_offsets[t] + leaf] = R::one();
    }
    out
}

pub fn encode_dataset<R: Real>(model: &GbdtModel<R>, rows: &[Vec<R>]) -> Vec<Vec<R>> {
    rows.iter().map(|r| leaf_one_hot(model, r)).collect()
}

/// Ordered concatenation [x_aug ‖ x] after checking both parts against the
/// model's dimensions.
pub fn concat_augmented<R: Real>(
    model: &GbdtModel<R>,
    x: &[R],
    x_aug: &[R],
) -> Result<Vec<R>> {
    let enc = leaf_encoding(model);
    if x.len() != model.n_features {
        return Err(CoreError::DimensionMismatch(format!(
            "x has {} entries, model expects {}",
            x.len(),
            model.n_features
        )));
    }
    if x_aug.len() != enc.total_dim {
        return Err(CoreError::DimensionMismatch(format!(
            "x_aug has {} entries, encoding expects {}",
            x_aug.len(),
            enc.total_dim
        )));
    }
    let mut out = Vec::with_capacity(x.len() + x_aug.len());
    out.extend_from_slice(x_aug);
    out.extend_from_slice(x);
    Ok(out)
}

/// Debug dump of encodings, one row per sample.
pub fn encodings_to_csv<R: Real>(model: &GbdtModel<R>, rows: &[Vec<R>]) -> String {
    let mut out = String::new();
    for row in rows {
        let enc = leaf_one_hot(model, row);
        let cells: Vec<String> = enc.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig { n_trees: 100, max_depth: 8, min_samples_leaf: 2, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RfModel<R> {
    pub trees: Vec<Tree<R>>,
    pub n_features: usize,
    pub config: RfConfig,
}

/// Bootstrap forest of Gini trees; each tree draws N rows with replacement
/// from a per-tree seed and considers ceil(sqrt(d)) random features per node.
pub fn fit_rf<R: Real>(features: &[Vec<R>], labels: &[u8], config: &RfConfig) -> Result<RfModel<R>> {
    let d = validate_training_data(features, labels)?;
    let n = features.len();
    let n_candidates = (d as f64).sqrt().ceil() as usize;

    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng = rng_from(derive_seed(config.seed, t as u64));
        let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut next_leaf = 0;
        let root = build_gini_node::<R>(
            features,
            labels,
            &bootstrap,
            0,
            config.max_depth,
            config.min_samples_leaf,
            n_candidates,
            &mut rng,
            &mut next_leaf,
        );
        trees.push(Tree { root, n_leaves: next_leaf });
    }
    Ok(RfModel { trees, n_features: d, config: *config })
}

/// Per-tree leaf class-1 frequencies; the features consumed by the
/// rf-augmented ablation variant.
pub fn rf_correlation_features<R: Real>(model: &RfModel<R>, x: &[R]) -> Vec<R> {
    model.trees.iter().map(|t| t.value_of(x)).collect()
}

/// Forest probability: mean of the per-tree leaf frequencies.
pub fn rf_predict_proba<R: Real>(model: &RfModel<R>, x: &[R]) -> R {
    let sum = model
        .trees
        .iter()
        .fold(R::zero(), |acc, t| acc + t.value_of(x));
    sum / R::of(model.trees.len() as f64)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub const GBDT_FORMAT: &str = "gbdt.v1";
pub const RF_FORMAT: &str = "rf.v1";

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    model: M,
}

pub fn gbdt_to_json<R: Real>(model: &GbdtModel<R>) -> Result<String> {
    Ok(serde_json::to_string(&Envelope { format: GBDT_FORMAT.to_string(), model })?)
}

pub fn gbdt_from_json<R: Real>(json: &str) -> Result<GbdtModel<R>> {
    let env: Envelope<GbdtModel<R>> = serde_json::from_str(json)?;
    if env.format != GBDT_FORMAT {
        return Err(CoreError::Schema(format!("unsupported model format '{}'", env.format)));
    }
    Ok(env.model)
}

pub fn rf_to_json<R: Real>(model: &RfModel<R>) -> Result<String> {
    Ok(serde_json::to_string(&Envelope { format: RF_FORMAT.to_string(), model })?)
}

pub fn rf_from_json<R: Real>(json: &str) -> Result<RfModel<R>> {
    let env: Envelope<RfModel<R>> = serde_json::from_str(json)?;
    if env.format != RF_FORMAT {
        return Err(CoreError::Schema(format!("unsupported model format '{}'", env.format)));
    }
    Ok(env.model)
}

// ---------------------------------------------------------------------------
