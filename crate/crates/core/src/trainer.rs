//! Two-stage training orchestration.
//!
//! Stage 1 fits the interaction module and the classifier head with
//! full-batch Adam on `L₁ = L_y + α·L_sparse`. Stage 2 freezes both and
//! alternates per epoch between a discriminator SGD step on `L_D` and a
//! generator SGD step on `L₂ = L_aux + β·L_G`, the generator step always
//! seeing the just-updated discriminator. Both stages keep the snapshot with
//! the highest validation accuracy (earliest epoch on ties) and restore it
//! before returning.
//!
//! Training is full batch and RNG-free, so a fixed (data, seed, config)
//! triple reproduces traces and parameters bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::faim::{
    active_pairs, backward_sample, forward_sample, sparse_penalty, FaimParams, InteractionSet,
    SparseMode,
};
use crate::fam::{
    bce, bce_grad_logit, grad_aux_generator, grad_discriminator, grad_generator_adversarial,
    loss_aux, loss_discriminator, loss_generator,
};
use crate::forest::{leaf_one_hot, rf_correlation_features, GbdtModel};
use crate::nn::{Classifier, Mlp2};
use crate::rng::{rng_from, derive_seed, stream};
use crate::scalar::Real;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageOneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coefficient on the sparse penalty.
    pub alpha: f64,
    pub sparse_mode: SparseMode,
}

impl Default for StageOneConfig {
    fn default() -> Self {
        StageOneConfig {
            epochs: 10_000,
            learning_rate: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            alpha: 0.05,
            sparse_mode: SparseMode::LogitL1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTwoConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Coefficient on the adversarial generator loss.
    pub beta: f64,
    pub d_steps_per_epoch: usize,
    pub g_steps_per_epoch: usize,
    /// Global gradient-norm cap applied to both step kinds.
    pub clip_norm: f64,
}

impl Default for StageTwoConfig {
    fn default() -> Self {
        StageTwoConfig {
            epochs: 10_000,
            learning_rate: 0.005,
            beta: 0.5,
            d_steps_per_epoch: 1,
            g_steps_per_epoch: 1,
            clip_norm: 5.0,
        }
    }
}

/// One evaluation point of the loss trace. Stage-1 rows carry `l_y` and
/// `l_sparse`; stage-2 rows carry `l_d`, `l_aux`, and `l_g`. Epoch 0 is the
/// state before the first update.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: u8,
    pub epoch: usize,
    pub l_y: Option<f64>,
    pub l_sparse: Option<f64>,
    pub l_d: Option<f64>,
    pub l_aux: Option<f64>,
    pub l_g: Option<f64>,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub trace: Vec<TraceRow>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Full-batch Adam over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<R> {
    lr: R,
    beta1: R,
    beta2: R,
    epsilon: R,
    step_count: u32,
    m: Vec<R>,
    v: Vec<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            lr: R::of(lr),
            beta1: R::of(beta1),
            beta2: R::of(beta2),
            epsilon: R::of(epsilon),
            step_count: 0,
            m: vec![R::zero(); n_params],
            v: vec![R::zero(); n_params],
        }
    }

    pub fn step(&mut self, params: &mut [R], grads: &[R]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step_count += 1;
        let one = R::one();
        let bc1 = one - self.beta1.powi(self.step_count as i32);
        let bc2 = one - self.beta2.powi(self.step_count as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

pub fn sgd_step<R: Real>(params: &mut [R], grads: &[R], lr: R) {
    debug_assert_eq!(params.len(), grads.len());
    for (p, &g) in params.iter_mut().zip(grads) {
        *p = *p - lr * g;
    }
}

/// Scales `grads` in place so its L2 norm is at most `max_norm`; returns the
/// pre-clip norm.
pub fn clip_global_norm<R: Real>(grads: &mut [R], max_norm: R) -> R {
    let norm = grads
        .iter()
        .fold(R::zero(), |acc, &g| acc + g * g)
        .sqrt();
    if norm > max_norm && norm > R::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}

fn accuracy<R: Real>(probs: &[R], labels: &[u8]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let half = R::of(0.5);
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= half) == y)
        .count();
    correct as f64 / probs.len() as f64
}

/// L_y (mean clamped BCE of F(h_aug)) and L_sparse (summed per-sample
/// penalty) at the current parameters.
pub fn stage1_losses<R: Real>(
    faim: &FaimParams<R>,
    clf: &Classifier<R>,
    x_aug: &[Vec<R>],
    isets: &[InteractionSet],
    labels: &[u8],
    mode: SparseMode,
) -> (R, R) {
    let mut l_y = R::zero();
    let mut l_sparse = R::zero();
    for ((x, iset), &y) in x_aug.iter().zip(isets).zip(labels) {
        let cache = forward_sample(faim, x, iset);
        l_y = l_y + bce(clf.proba(&cache.h_aug), y);
        l_sparse = l_sparse + sparse_penalty(&cache.attention, mode);
    }
    (l_y / R::of(x_aug.len() as f64), l_sparse)
}

/// Gradients of L₁ = L_y + α·L_sparse with respect to the interaction module
/// and classifier, plus the loss components.
#[allow(clippy::too_many_arguments)]
fn stage1_gradients<R: Real>(
    faim: &FaimParams<R>,
    clf: &Classifier<R>,
    x_aug: &[Vec<R>],
    isets: &[InteractionSet],
    labels: &[u8],
    alpha: R,
    mode: SparseMode,
    faim_grads: &mut FaimParams<R>,
    clf_grads: &mut Classifier<R>,
) -> (R, R) {
    let n = R::of(x_aug.len() as f64);
    let p = faim.embed_dim();
    let mut l_y = R::zero();
    let mut l_sparse = R::zero();
    let mut d_h = vec![R::zero(); p];
    for ((x, iset), &y) in x_aug.iter().zip(isets).zip(labels) {
        let cache = forward_sample(faim, x, iset);
        let prob = clf.proba(&cache.h_aug);
        l_y = l_y + bce(prob, y);
        l_sparse = l_sparse + sparse_penalty(&cache.attention, mode);
        let d_logit = bce_grad_logit(prob, y) / n;
        d_h.iter_mut().for_each(|v| *v = R::zero());
        clf.backward(&cache.h_aug, d_logit, clf_grads, Some(&mut d_h));
        backward_sample(faim, x, iset, &cache, &d_h, alpha, mode, faim_grads);
    }
    (l_y / n, l_sparse)
}

/// Full-batch Adam on L₁ over the interaction module and classifier head.
/// `faim` and `clf` are left at the best-validation snapshot.
#[allow(clippy::too_many_arguments)]
pub fn train_stage1<R: Real>(
    faim: &mut FaimParams<R>,
    clf: &mut Classifier<R>,
    x_aug_train: &[Vec<R>],
    y_train: &[u8],
    x_aug_val: &[Vec<R>],
    y_val: &[u8],
    config: &StageOneConfig,
) -> Result<StageReport> {
    if x_aug_train.is_empty() {
        return Err(CoreError::EmptyInput("stage 1 with no training rows".into()));
    }
    let isets_train: Vec<InteractionSet> = x_aug_train.iter().map(|x| active_pairs(x)).collect();
    let isets_val: Vec<InteractionSet> = x_aug_val.iter().map(|x| active_pairs(x)).collect();
    let alpha = R::of(config.alpha);

    let n_params = faim.n_params() + clf.n_params();
    let mut adam = Adam::<R>::new(
        n_params,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut flat: Vec<R> = Vec::with_capacity(n_params);
    let mut flat_grads: Vec<R> = Vec::with_capacity(n_params);

    let mut trace = Vec::with_capacity(config.epochs + 1);
    let mut best: Option<(usize, f64, FaimParams<R>, Classifier<R>)> = None;

    let val_accuracy = |faim: &FaimParams<R>, clf: &Classifier<R>| -> f64 {
        let probs: Vec<R> = x_aug_val
            .iter()
            .zip(&isets_val)
            .map(|(x, iset)| clf.proba(&forward_sample(faim, x, iset).h_aug))
            .collect();
        accuracy(&probs, y_val)
    };

    for epoch in 0..=config.epochs {
        let mut faim_grads = faim.zeros_like();
        let mut clf_grads = clf.zeros_like();
        let (l_y, l_sparse) = stage1_gradients(
            faim,
            clf,
            x_aug_train,
            &isets_train,
            y_train,
            alpha,
            config.sparse_mode,
            &mut faim_grads,
            &mut clf_grads,
        );
        let l1 = l_y + alpha * l_sparse;
        if !l1.is_finite() {
            return Err(CoreError::NonFiniteLoss { loss: "L1".into(), epoch });
        }

        let val_acc = val_accuracy(faim, clf);
        trace.push(TraceRow {
            stage: 1,
            epoch,
            l_y: Some(l_y.as_f64()),
            l_sparse: Some(l_sparse.as_f64()),
            l_d: None,
            l_aux: None,
            l_g: None,
            val_acc,
        });
        if best.as_ref().map_or(true, |(_, acc, _, _)| val_acc > *acc) {
            best = Some((epoch, val_acc, faim.clone(), clf.clone()));
        }
        if epoch == config.epochs {
            break;
        }

        flat.clear();
        faim.write_flat(&mut flat);
        clf.write_flat(&mut flat);
        flat_grads.clear();
        faim_grads.write_flat(&mut flat_grads);
        clf_grads.write_flat(&mut flat_grads);
        adam.step(&mut flat, &flat_grads);
        let used = faim.read_flat(&flat);
        clf.read_flat(&flat[used..]);
    }

    let (best_epoch, best_val_acc, best_faim, best_clf) = best.expect("at least one epoch");
    *faim = best_faim;
    *clf = best_clf;
    Ok(StageReport { trace, best_epoch, best_val_acc })
}

/// Alternating SGD on the alignment networks with the interaction module and
/// classifier frozen. Representations `h_aug` are computed once from the
/// frozen parameters. `gen` and `dis` are left at the best-validation
/// snapshot (mean-fusion head accuracy).
#[allow(clippy::too_many_arguments)]
pub fn train_stage2<R: Real>(
    faim: &FaimParams<R>,
    clf: &Classifier<R>,
    gen: &mut Mlp2<R>,
    dis: &mut Mlp2<R>,
    x_train: &[Vec<R>],
    x_aug_train: &[Vec<R>],
    y_train: &[u8],
    x_val: &[Vec<R>],
    x_aug_val: &[Vec<R>],
    y_val: &[u8],
    config: &StageTwoConfig,
) -> Result<StageReport> {
    let h_aug =
        |rows: &[Vec<R>]| -> Vec<Vec<R>> { rows.iter().map(|x| crate::faim::faim_forward(faim, x)).collect() };
    let h_aug_train = h_aug(x_aug_train);
    let h_aug_val = h_aug(x_aug_val);
    train_stage2_from_reprs(
        clf, gen, dis, x_train, &h_aug_train, y_train, x_val, &h_aug_val, y_val, config,
    )
}

/// Stage 2 against precomputed target representations. [`train_stage2`] is
/// the interaction-module front end; ablation variants that swap that module
/// out for a plain mapper call this directly.
#[allow(clippy::too_many_arguments)]
pub fn train_stage2_from_reprs<R: Real>(
    clf: &Classifier<R>,
    gen: &mut Mlp2<R>,
    dis: &mut Mlp2<R>,
    x_train: &[Vec<R>],
    h_aug_train: &[Vec<R>],
    y_train: &[u8],
    x_val: &[Vec<R>],
    h_aug_val: &[Vec<R>],
    y_val: &[u8],
    config: &StageTwoConfig,
) -> Result<StageReport> {
    if x_train.is_empty() {
        return Err(CoreError::EmptyInput("stage 2 with no training rows".into()));
    }
    let beta = R::of(config.beta);
    let lr = R::of(config.learning_rate);
    let clip = R::of(config.clip_norm);

    let mut trace = Vec::with_capacity(config.epochs + 1);
    let mut best: Option<(usize, f64, Mlp2<R>, Mlp2<R>)> = None;
    let mut flat: Vec<R> = Vec::new();
    let mut flat_grads: Vec<R> = Vec::new();

    let val_accuracy = |gen: &Mlp2<R>| -> f64 {
        let half = R::of(0.5);
        let probs: Vec<R> = x_val
            .iter()
            .zip(h_aug_val)
            .map(|(x, ha)| {
                let h = gen.forward(x);
                let fused: Vec<R> = h.iter().zip(ha).map(|(&a, &b)| (a + b) * half).collect();
                clf.proba(&fused)
            })
            .collect();
        accuracy(&probs, y_val)
    };

    for epoch in 0..=config.epochs {
        let gen_h: Vec<Vec<R>> = x_train.iter().map(|x| gen.forward(x)).collect();
        let l_d = loss_discriminator(dis, &gen_h, &h_aug_train);
        let l_aux = loss_aux(clf, &gen_h, y_train);
        let l_g = loss_generator(gen, dis, x_train);
        let l2 = l_aux + beta * l_g;
        if !l_d.is_finite() || !l2.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                loss: if l_d.is_finite() { "L2".into() } else { "L_D".into() },
                epoch,
            });
        }

        let val_acc = val_accuracy(gen);
        trace.push(TraceRow {
            stage: 2,
            epoch,
            l_y: None,
            l_sparse: None,
            l_d: Some(l_d.as_f64()),
            l_aux: Some(l_aux.as_f64()),
            l_g: Some(l_g.as_f64()),
            val_acc,
        });
        if best.as_ref().map_or(true, |(_, acc, _, _)| val_acc > *acc) {
            best = Some((epoch, val_acc, gen.clone(), dis.clone()));
        }
        if epoch == config.epochs {
            break;
        }

        // Discriminator steps on the current generator representations.
        for _ in 0..config.d_steps_per_epoch {
            let d_grads = grad_discriminator(dis, &gen_h, &h_aug_train);
            flat.clear();
            dis.write_flat(&mut flat);
            flat_grads.clear();
            d_grads.write_flat(&mut flat_grads);
            clip_global_norm(&mut flat_grads, clip);
            sgd_step(&mut flat, &flat_grads, lr);
            dis.read_flat(&flat);
        }

        // Generator steps against the just-updated discriminator.
        for _ in 0..config.g_steps_per_epoch {
            let aux = grad_aux_generator(clf, gen, x_train, y_train);
            let adv = grad_generator_adversarial(gen, dis, x_train);
            flat.clear();
            gen.write_flat(&mut flat);
            flat_grads.clear();
            aux.write_flat(&mut flat_grads);
            let mut adv_flat = Vec::with_capacity(flat_grads.len());
            adv.write_flat(&mut adv_flat);
            for (g, &a) in flat_grads.iter_mut().zip(&adv_flat) {
                *g = *g + beta * a;
            }
            clip_global_norm(&mut flat_grads, clip);
            sgd_step(&mut flat, &flat_grads, lr);
            gen.read_flat(&flat);
        }
    }

    let (best_epoch, best_val_acc, best_gen, best_dis) = best.expect("at least one epoch");
    *gen = best_gen;
    *dis = best_dis;
    Ok(StageReport { trace, best_epoch, best_val_acc })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionHead {
    /// F(h_aug): interaction-module branch only.
    AugOnly,
    /// F(h): generator branch only.
    GenOnly,
    /// F((h + h_aug)/2), the default.
    MeanFusion,
}

/// Head logic shared by all model variants: picks or averages the available
/// representations and applies the classifier with the p ≥ 0.5 class rule.
pub fn fuse_predict<R: Real>(
    clf: &Classifier<R>,
    h_aug: Option<&[R]>,
    h: Option<&[R]>,
    head: FusionHead,
) -> Result<(R, u8)> {
    let missing = |what: &str| CoreError::Invalid(format!("{what} required by this fusion head"));
    let prob = match head {
        FusionHead::AugOnly => clf.proba(h_aug.ok_or_else(|| missing("h_aug"))?),
        FusionHead::GenOnly => clf.proba(h.ok_or_else(|| missing("h"))?),
        FusionHead::MeanFusion => {
            let ha = h_aug.ok_or_else(|| missing("h_aug"))?;
            let hg = h.ok_or_else(|| missing("h"))?;
            let half = R::of(0.5);
            let fused: Vec<R> = ha.iter().zip(hg).map(|(&a, &b)| (a + b) * half).collect();
            clf.proba(&fused)
        }
    };
    Ok((prob, u8::from(prob >= R::of(0.5))))
}

pub const CHECKPOINT_FORMAT: &str = "checkpoint.v1";

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StageSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Everything needed to reproduce a trained model's predictions exactly.
/// Optional components cover the ablation variants, which train subsets of
/// the full pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint<R> {
    pub format: String,
    pub variant: String,
    pub seed: u64,
    pub gbdt: Option<GbdtModel<R>>,
    pub faim: Option<FaimParams<R>>,
    pub generator: Option<Mlp2<R>>,
    pub discriminator: Option<Mlp2<R>>,
    /// A replacement two-layer mapper for variants without the interaction
    /// module (applied to one-hot or forest-probability features).
    pub mapper: Option<Mlp2<R>>,
    pub rf: Option<crate::forest::RfModel<R>>,
    pub classifier: Classifier<R>,
    pub stage_one_config: Option<StageOneConfig>,
    pub stage_two_config: Option<StageTwoConfig>,
    pub stage_one: Option<StageSummary>,
    pub stage_two: Option<StageSummary>,
}

impl<R: Real> Checkpoint<R> {
    /// Skeleton with only the classifier filled in; callers attach the
    /// components their variant trains.
    pub fn new(variant: &str, seed: u64, classifier: Classifier<R>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            variant: variant.to_string(),
            seed,
            gbdt: None,
            faim: None,
            generator: None,
            discriminator: None,
            mapper: None,
            rf: None,
            classifier,
            stage_one_config: None,
            stage_two_config: None,
            stage_one: None,
            stage_two: None,
        }
    }
}

/// Inference on one standardized feature vector, routed by which components
/// the checkpoint carries: the boosted trees produce the one-hot encoding and
/// the interaction module (or its replacement mapper) produces h_aug; the
/// generator produces h, with forest-probability features mapped and summed
/// in when the checkpoint holds a random forest; the head fuses the two.
pub fn predict<R: Real>(ckpt: &Checkpoint<R>, x: &[R], head: FusionHead) -> Result<(R, u8)> {
    let need = |what: &str| CoreError::Invalid(format!("checkpoint has no {what}"));
    let h_aug = if head == FusionHead::GenOnly {
        None
    } else {
        let gbdt = ckpt.gbdt.as_ref().ok_or_else(|| need("boosted-tree model"))?;
        let x_aug = leaf_one_hot(gbdt, x);
        match (&ckpt.faim, &ckpt.mapper) {
            (Some(faim), _) => Some(crate::faim::faim_forward(faim, &x_aug)),
            (None, Some(mapper)) => Some(mapper.forward(&x_aug)),
            (None, None) => return Err(need("interaction module")),
        }
    };
    let h = if head == FusionHead::AugOnly {
        None
    } else {
        let gen = ckpt.generator.as_ref().ok_or_else(|| need("generator"))?;
        let mut h = gen.forward(x);
        if let Some(rf) = &ckpt.rf {
            let mapper = ckpt.mapper.as_ref().ok_or_else(|| need("forest-feature mapper"))?;
            let mapped = mapper.forward(&rf_correlation_features(rf, x));
            for (a, b) in h.iter_mut().zip(mapped) {
                *a = *a + b;
            }
        }
        Some(h)
    };
    fuse_predict(&ckpt.classifier, h_aug.as_deref(), h.as_deref(), head)
}

pub fn save_checkpoint<R: Real>(path: &Path, ckpt: &Checkpoint<R>) -> Result<()> {
    let json = serde_json::to_string_pretty(ckpt)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_checkpoint<R: Real>(path: &Path) -> Result<Checkpoint<R>> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint<R> = serde_json::from_str(&text)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(CoreError::Schema(format!(
            "unsupported checkpoint format {:?}",
            ckpt.format
        )));
    }
    Ok(ckpt)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditSection {
    pub loss: String,
    pub n_probes: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub sections: Vec<AuditSection>,
    pub max_rel_err: f64,
}

const AUDIT_STEP: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1.0)
}

/// Central-difference comparison of the analytic gradients of each training
/// loss against probes of randomly chosen coordinates in that loss's own
/// trainable block: L₁ probes the interaction module and classifier, L_D the
/// discriminator, L₂ the generator.
#[allow(clippy::too_many_arguments)]
pub fn finite_diff_audit<R: Real>(
    faim: &FaimParams<R>,
    clf: &Classifier<R>,
    gen: &Mlp2<R>,
    dis: &Mlp2<R>,
    x_aug: &[Vec<R>],
    x: &[Vec<R>],
    labels: &[u8],
    s1: &StageOneConfig,
    s2: &StageTwoConfig,
    n_probes_per_loss: usize,
    seed: u64,
) -> AuditReport {
    use rand::Rng;
    let mut rng = rng_from(derive_seed(seed, stream::AUDIT));
    let isets: Vec<InteractionSet> = x_aug.iter().map(|v| active_pairs(v)).collect();
    let alpha = R::of(s1.alpha);
    let beta = R::of(s2.beta);
    let eps = R::of(AUDIT_STEP);
    let mut sections = Vec::with_capacity(3);

    // L₁ over the interaction module and classifier head.
    {
        let mut faim_grads = faim.zeros_like();
        let mut clf_grads = clf.zeros_like();
        stage1_gradients(
            faim,
            clf,
            x_aug,
            &isets,
            labels,
            alpha,
            s1.sparse_mode,
            &mut faim_grads,
            &mut clf_grads,
        );
        let mut analytic = Vec::new();
        faim_grads.write_flat(&mut analytic);
        clf_grads.write_flat(&mut analytic);
        let mut flat = Vec::new();
        faim.write_flat(&mut flat);
        clf.write_flat(&mut flat);

        let loss_at = |flat: &[R]| -> R {
            let mut f = faim.clone();
            let mut c = clf.clone();
            let used = f.read_flat(flat);
            c.read_flat(&flat[used..]);
            let (l_y, l_sparse) = stage1_losses(&f, &c, x_aug, &isets, labels, s1.sparse_mode);
            l_y + alpha * l_sparse
        };
        let mut max_err = 0.0f64;
        for _ in 0..n_probes_per_loss {
            let k = rng.gen_range(0..flat.len());
            let mut probe = flat.clone();
            probe[k] = flat[k] + eps;
            let up = loss_at(&probe);
            probe[k] = flat[k] - eps;
            let down = loss_at(&probe);
            let numeric = (up - down).as_f64() / (2.0 * AUDIT_STEP);
            max_err = max_err.max(rel_err(analytic[k].as_f64(), numeric));
        }
        sections.push(AuditSection {
            loss: "L1".into(),
            n_probes: n_probes_per_loss,
            max_rel_err: max_err,
        });
    }

    // L_D over the discriminator, representations fixed.
    let gen_h: Vec<Vec<R>> = x.iter().map(|v| gen.forward(v)).collect();
    let h_aug: Vec<Vec<R>> = x_aug
        .iter()
        .map(|v| crate::faim::faim_forward(faim, v))
        .collect();
    {
        let grads = grad_discriminator(dis, &gen_h, &h_aug);
        let mut analytic = Vec::new();
        grads.write_flat(&mut analytic);
        let mut flat = Vec::new();
        dis.write_flat(&mut flat);
        let loss_at = |flat: &[R]| -> R {
            let mut d = dis.clone();
            d.read_flat(flat);
            loss_discriminator(&d, &gen_h, &h_aug)
        };
        let mut max_err = 0.0f64;
        for _ in 0..n_probes_per_loss {
            let k = rng.gen_range(0..flat.len());
            let mut probe = flat.clone();
            probe[k] = flat[k] + eps;
            let up = loss_at(&probe);
            probe[k] = flat[k] - eps;
            let down = loss_at(&probe);
            let numeric = (up - down).as_f64() / (2.0 * AUDIT_STEP);
            max_err = max_err.max(rel_err(analytic[k].as_f64(), numeric));
        }
        sections.push(AuditSection {
            loss: "L_D".into(),
            n_probes: n_probes_per_loss,
            max_rel_err: max_err,
        });
    }

    // L₂ over the generator, discriminator and classifier frozen.
    {
        let aux = grad_aux_generator(clf, gen, x, labels);
        let adv = grad_generator_adversarial(gen, dis, x);
        let mut analytic = Vec::new();
        aux.write_flat(&mut analytic);
        let mut adv_flat = Vec::new();
        adv.write_flat(&mut adv_flat);
        for (a, &b) in analytic.iter_mut().zip(&adv_flat) {
            *a = *a + beta * b;
        }
        let mut flat = Vec::new();
        gen.write_flat(&mut flat);
        let loss_at = |flat: &[R]| -> R {
            let mut g = gen.clone();
            g.read_flat(flat);
            let hs: Vec<Vec<R>> = x.iter().map(|v| g.forward(v)).collect();
            loss_aux(clf, &hs, labels) + beta * loss_generator(&g, dis, x)
        };
        let mut max_err = 0.0f64;
        for _ in 0..n_probes_per_loss {
            let k = rng.gen_range(0..flat.len());
            let mut probe = flat.clone();
            probe[k] = flat[k] + eps;
            let up = loss_at(&probe);
            probe[k] = flat[k] - eps;
            let down = loss_at(&probe);
            let numeric = (up - down).as_f64() / (2.0 * AUDIT_STEP);
            max_err = max_err.max(rel_err(analytic[k].as_f64(), numeric));
        }
        sections.push(AuditSection {
            loss: "L2".into(),
            n_probes: n_probes_per_loss,
            max_rel_err: max_err,
        });
    }

    let max_rel_err = sections.iter().fold(0.0f64, |m, s| m.max(s.max_rel_err));
    AuditReport { sections, max_rel_err }
}
