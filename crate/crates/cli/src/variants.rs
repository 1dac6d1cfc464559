//! The four model variants and their per-seed training pipelines.
//!
//! All variants consume one prepared dataset (already imputed, perturbed,
//! split, and standardized) and produce a [`Checkpoint`]. They are sized to
//! carry the same number of trainable weights within a ±10% band so that
//! comparisons measure architecture, not capacity: the full pipeline fixes
//! the target count, and the reduced variants widen their hidden layers to
//! match it.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use fafcnn_core::error::{CoreError, Result};
use fafcnn_core::faim::FaimParams;
use fafcnn_core::fam::{bce, bce_grad_logit, init_classifier, init_discriminator, init_generator, HIDDEN_WIDTH};
use fafcnn_core::forest::{
    encode_dataset, fit_gbdt, fit_rf, leaf_encoding, rf_correlation_features, GbdtConfig,
    RfConfig,
};
use fafcnn_core::nn::{Activation, Classifier, Mlp2};
use fafcnn_core::rng::{derive_seed, stream};
use fafcnn_core::trainer::{
    train_stage1, train_stage2, train_stage2_from_reprs, Adam, Checkpoint, FusionHead,
    StageOneConfig, StageReport, StageSummary, StageTwoConfig, TraceRow,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Variant {
    /// Original features → generator → classifier, supervised only.
    Base,
    /// Base plus forest-probability features through a second mapper network,
    /// fused by summation; no adversarial training.
    RfNoFam,
    /// Boosted-tree one-hot features through a plain mapper instead of the
    /// interaction module, then the full alignment stage.
    NoFaim,
    /// The complete pipeline.
    Full,
}

impl Variant {
    pub fn all() -> [Variant; 4] {
        [Variant::Base, Variant::RfNoFam, Variant::NoFaim, Variant::Full]
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::RfNoFam => "rf_no_fam",
            Variant::NoFaim => "no_faim",
            Variant::Full => "full",
        }
    }

    pub fn from_name(name: &str) -> Result<Variant> {
        Variant::all()
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| CoreError::Invalid(format!("unknown variant '{name}'")))
    }

    /// The head a checkpoint of this variant is evaluated with unless the
    /// caller overrides it. Variants without a second branch have nothing to
    /// fuse.
    pub fn default_head(self) -> FusionHead {
        match self {
            Variant::Base | Variant::RfNoFam => FusionHead::GenOnly,
            Variant::NoFaim | Variant::Full => FusionHead::MeanFusion,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn mlp_count(in_dim: usize, hidden: usize, out_dim: usize) -> usize {
    (in_dim + 1) * hidden + (hidden + 1) * out_dim
}

/// Hidden widths giving every variant a trainable-weight count within ±10%
/// of the full pipeline's, which is fixed by the encoding size `td`, the
/// original feature count `d`, and the embedding size `p`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ParityWidths {
    /// Trainable weights in the full variant; the count every other variant
    /// is sized against.
    pub target: usize,
    pub base_hidden: usize,
    /// One width shared by the generator and the forest-feature mapper.
    pub rf_no_fam_hidden: usize,
    /// Width of the mapper standing in for the interaction module.
    pub no_faim_hidden: usize,
}

const PARITY_BAND: f64 = 0.10;

fn solve_width(target: usize, count: impl Fn(usize) -> usize, guess: usize) -> Result<usize> {
    let lo = (target as f64 * (1.0 - PARITY_BAND)).ceil() as usize;
    let hi = (target as f64 * (1.0 + PARITY_BAND)).floor() as usize;
    let mut h = guess.max(1);
    while count(h) < lo {
        h += 1;
    }
    while h > 1 && count(h) > hi {
        h -= 1;
    }
    let c = count(h);
    if c < lo || c > hi {
        return Err(CoreError::Degenerate(format!(
            "no hidden width lands within ±10% of {target} weights (closest {c} at width {h})"
        )));
    }
    Ok(h)
}

pub fn parity_widths(td: usize, d: usize, p: usize, rf_trees: usize) -> Result<ParityWidths> {
    let faim = 2 * td * p + p * p + 2 * p;
    let gen = mlp_count(d, HIDDEN_WIDTH, p);
    let dis = mlp_count(p, HIDDEN_WIDTH, p);
    let clf = p + 1;
    let target = faim + gen + dis + clf;

    let base = |h: usize| mlp_count(d, h, p) + clf;
    let rf = |h: usize| mlp_count(d, h, p) + mlp_count(rf_trees, h, p) + clf;
    let no_faim = |h: usize| mlp_count(td, h, p) + gen + dis + clf;

    Ok(ParityWidths {
        target,
        base_hidden: solve_width(target, base, (target - clf) / (d + 2 + p))?,
        rf_no_fam_hidden: solve_width(target, rf, (target - clf) / (d + rf_trees + 2 * p + 4))?,
        no_faim_hidden: solve_width(target, no_faim, faim / (td + 2 + p))?,
    })
}

/// Trainable weights carried by a checkpoint (networks and the interaction
/// module; fitted trees are not gradient-trained and are excluded).
pub fn trainable_params(ckpt: &Checkpoint<f64>) -> usize {
    ckpt.faim.as_ref().map_or(0, FaimParams::n_params)
        + ckpt.generator.as_ref().map_or(0, Mlp2::n_params)
        + ckpt.discriminator.as_ref().map_or(0, Mlp2::n_params)
        + ckpt.mapper.as_ref().map_or(0, Mlp2::n_params)
        + ckpt.classifier.n_params()
}

/// One prepared split in tensor form, the common input to every variant.
pub struct SplitTensors {
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<u8>,
    pub x_val: Vec<Vec<f64>>,
    pub y_val: Vec<u8>,
}

#[derive(Debug)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint<f64>,
    pub trace: Vec<TraceRow>,
    pub widths: ParityWidths,
}

fn summary(report: &StageReport, epochs: usize) -> StageSummary {
    StageSummary {
        epochs_run: epochs,
        best_epoch: report.best_epoch,
        best_val_acc: report.best_val_acc,
    }
}

/// Joint full-batch Adam over a front network, an optional second mapper
/// whose output is summed in, and the classifier head, on mean binary
/// cross-entropy. This is the whole of training for the supervised variants
/// and the first stage for the mapper-based one; the sparse settings in the
/// config do not apply because nothing here has attention logits. The loss
/// is clamped cross-entropy, finite for any parameters, so this stage never
/// aborts.
#[allow(clippy::too_many_arguments)]
fn train_joint_supervised(
    net: &mut Mlp2<f64>,
    mapper: Option<(&mut Mlp2<f64>, &[Vec<f64>], &[Vec<f64>])>,
    clf: &mut Classifier<f64>,
    x_train: &[Vec<f64>],
    y_train: &[u8],
    x_val: &[Vec<f64>],
    y_val: &[u8],
    config: &StageOneConfig,
) -> Result<StageReport> {
    if x_train.is_empty() {
        return Err(CoreError::EmptyInput("supervised training with no rows".into()));
    }
    let (mut map_net, map_train, map_val) = match mapper {
        Some((m, t, v)) => (Some(m), Some(t), Some(v)),
        None => (None, None, None),
    };
    let inv_n = 1.0 / x_train.len() as f64;
    let n_params = net.n_params()
        + map_net.as_ref().map_or(0, |m| m.n_params())
        + clf.n_params();
    let mut adam = Adam::<f64>::new(
        n_params,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );

    let represent = |net: &Mlp2<f64>, map_net: &Option<&mut Mlp2<f64>>, x: &[f64], r: Option<&Vec<f64>>| {
        let mut h = net.forward(x);
        if let (Some(m), Some(r)) = (map_net.as_ref(), r) {
            for (a, b) in h.iter_mut().zip(m.forward(r)) {
                *a += b;
            }
        }
        h
    };

    let mut trace = Vec::with_capacity(config.epochs + 1);
    let mut best: Option<(usize, f64, Mlp2<f64>, Option<Mlp2<f64>>, Classifier<f64>)> = None;
    let mut flat: Vec<f64> = Vec::new();
    let mut flat_grads: Vec<f64> = Vec::new();

    for epoch in 0..=config.epochs {
        let mut l_y = 0.0;
        for (i, (x, &y)) in x_train.iter().zip(y_train).enumerate() {
            let h = represent(net, &map_net, x, map_train.map(|t| &t[i]));
            l_y += bce(clf.proba(&h), y) * inv_n;
        }

        let correct = x_val
            .iter()
            .enumerate()
            .filter(|(i, x)| {
                let h = represent(net, &map_net, x, map_val.map(|v| &v[*i]));
                u8::from(clf.proba(&h) >= 0.5) == y_val[*i]
            })
            .count();
        let val_acc = correct as f64 / y_val.len() as f64;
        trace.push(TraceRow {
            stage: 1,
            epoch,
            l_y: Some(l_y),
            l_sparse: None,
            l_d: None,
            l_aux: None,
            l_g: None,
            val_acc,
        });
        if best.as_ref().map_or(true, |(_, acc, ..)| val_acc > *acc) {
            best = Some((
                epoch,
                val_acc,
                net.clone(),
                map_net.as_ref().map(|m| (**m).clone()),
                clf.clone(),
            ));
        }
        if epoch == config.epochs {
            break;
        }

        let mut net_grads = net.zeros_like();
        let mut map_grads = map_net.as_ref().map(|m| m.zeros_like());
        let mut clf_grads = clf.zeros_like();
        for (i, (x, &y)) in x_train.iter().zip(y_train).enumerate() {
            let cache = net.forward_cached(x);
            let map_cache = match (&map_net, map_train) {
                (Some(m), Some(t)) => Some(m.forward_cached(&t[i])),
                _ => None,
            };
            let mut h = cache.out.clone();
            if let Some(mc) = &map_cache {
                for (a, b) in h.iter_mut().zip(&mc.out) {
                    *a += b;
                }
            }
            let d_logit = bce_grad_logit(clf.proba(&h), y) * inv_n;
            let mut d_h = vec![0.0; h.len()];
            clf.backward(&h, d_logit, &mut clf_grads, Some(&mut d_h));
            net.backward(x, &cache, &d_h, &mut net_grads, None);
            if let (Some(m), Some(mc), Some(mg), Some(t)) =
                (&map_net, &map_cache, map_grads.as_mut(), map_train)
            {
                m.backward(&t[i], mc, &d_h, mg, None);
            }
        }

        flat.clear();
        net.write_flat(&mut flat);
        if let Some(m) = &map_net {
            m.write_flat(&mut flat);
        }
        clf.write_flat(&mut flat);
        flat_grads.clear();
        net_grads.write_flat(&mut flat_grads);
        if let Some(mg) = &map_grads {
            mg.write_flat(&mut flat_grads);
        }
        clf_grads.write_flat(&mut flat_grads);
        adam.step(&mut flat, &flat_grads);
        let mut used = net.read_flat(&flat);
        if let Some(m) = map_net.as_mut() {
            used += m.read_flat(&flat[used..]);
        }
        clf.read_flat(&flat[used..]);
    }

    let (best_epoch, best_val_acc, best_net, best_map, best_clf) =
        best.expect("at least one epoch");
    *net = best_net;
    *clf = best_clf;
    if let (Some(m), Some(bm)) = (map_net.as_mut(), best_map) {
        **m = bm;
    }
    Ok(StageReport { trace, best_epoch, best_val_acc })
}

/// Trains one variant on one prepared split. The boosted trees are always
/// fitted (they fix the parity target even for variants that do not keep
/// them), the variant-specific networks are initialized from per-component
/// seed streams, and training follows the variant's pipeline.
#[allow(clippy::too_many_arguments)]
pub fn train_variant(
    variant: Variant,
    tensors: &SplitTensors,
    seed: u64,
    gbdt_config: &GbdtConfig,
    rf_config: &RfConfig,
    p: usize,
    stage1: &StageOneConfig,
    stage2: &StageTwoConfig,
) -> Result<TrainedModel> {
    let SplitTensors { x_train, y_train, x_val, y_val } = tensors;
    let d = x_train.first().map_or(0, Vec::len);

    let gbdt_fit = fit_gbdt(x_train, y_train, gbdt_config)?;
    let td = leaf_encoding(&gbdt_fit.model).total_dim;
    let widths = parity_widths(td, d, p, rf_config.n_trees)?;

    let faim_seed = derive_seed(seed, stream::FAIM_INIT);
    let fam_seed = derive_seed(seed, stream::FAM_INIT);
    let mapper_seed = derive_seed(seed, stream::MAPPER_INIT);
    let (gen_seed, dis_seed, clf_seed) =
        (fam_seed, fam_seed.wrapping_add(1), fam_seed.wrapping_add(2));

    let mut trace = Vec::new();
    let mut ckpt = Checkpoint::new(variant.name(), seed, init_classifier(p, clf_seed));
    ckpt.stage_one_config = Some(stage1.clone());

    match variant {
        Variant::Full => {
            let x_aug_train = encode_dataset(&gbdt_fit.model, x_train);
            let x_aug_val = encode_dataset(&gbdt_fit.model, x_val);
            let mut faim = FaimParams::init(td, p, faim_seed);
            let r1 = train_stage1(
                &mut faim,
                &mut ckpt.classifier,
                &x_aug_train,
                y_train,
                &x_aug_val,
                y_val,
                stage1,
            )?;
            ckpt.stage_one = Some(summary(&r1, stage1.epochs));
            trace.extend(r1.trace);

            let mut gen = init_generator(d, p, gen_seed);
            let mut dis = init_discriminator(p, dis_seed);
            let r2 = train_stage2(
                &faim,
                &ckpt.classifier,
                &mut gen,
                &mut dis,
                x_train,
                &x_aug_train,
                y_train,
                x_val,
                &x_aug_val,
                y_val,
                stage2,
            )?;
            ckpt.stage_two = Some(summary(&r2, stage2.epochs));
            ckpt.stage_two_config = Some(stage2.clone());
            trace.extend(r2.trace);

            ckpt.gbdt = Some(gbdt_fit.model);
            ckpt.faim = Some(faim);
            ckpt.generator = Some(gen);
            ckpt.discriminator = Some(dis);
        }
        Variant::Base => {
            let mut gen = Mlp2::init(d, widths.base_hidden, p, Activation::Relu, gen_seed);
            let r = train_joint_supervised(
                &mut gen,
                None,
                &mut ckpt.classifier,
                x_train,
                y_train,
                x_val,
                y_val,
                stage1,
            )?;
            ckpt.stage_one = Some(summary(&r, stage1.epochs));
            trace.extend(r.trace);
            ckpt.generator = Some(gen);
        }
        Variant::RfNoFam => {
            let rf = fit_rf(
                x_train,
                y_train,
                &RfConfig { seed: derive_seed(seed, stream::RF_BOOTSTRAP), ..*rf_config },
            )?;
            let rf_feats =
                |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
                    rows.iter().map(|x| rf_correlation_features(&rf, x)).collect()
                };
            let rf_train = rf_feats(x_train);
            let rf_val = rf_feats(x_val);
            let h = widths.rf_no_fam_hidden;
            let mut gen = Mlp2::init(d, h, p, Activation::Relu, gen_seed);
            let mut mapper = Mlp2::init(rf.trees.len(), h, p, Activation::Relu, mapper_seed);
            let r = train_joint_supervised(
                &mut gen,
                Some((&mut mapper, &rf_train, &rf_val)),
                &mut ckpt.classifier,
                x_train,
                y_train,
                x_val,
                y_val,
                stage1,
            )?;
            ckpt.stage_one = Some(summary(&r, stage1.epochs));
            trace.extend(r.trace);
            ckpt.generator = Some(gen);
            ckpt.mapper = Some(mapper);
            ckpt.rf = Some(rf);
        }
        Variant::NoFaim => {
            let x_aug_train = encode_dataset(&gbdt_fit.model, x_train);
            let x_aug_val = encode_dataset(&gbdt_fit.model, x_val);
            let mut mapper =
                Mlp2::init(td, widths.no_faim_hidden, p, Activation::Relu, mapper_seed);
            let r1 = train_joint_supervised(
                &mut mapper,
                None,
                &mut ckpt.classifier,
                &x_aug_train,
                y_train,
                &x_aug_val,
                y_val,
                stage1,
            )?;
            ckpt.stage_one = Some(summary(&r1, stage1.epochs));
            trace.extend(r1.trace);

            let reprs = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
                rows.iter().map(|x| mapper.forward(x)).collect()
            };
            let h_aug_train = reprs(&x_aug_train);
            let h_aug_val = reprs(&x_aug_val);
            let mut gen = init_generator(d, p, gen_seed);
            let mut dis = init_discriminator(p, dis_seed);
            let r2 = train_stage2_from_reprs(
                &ckpt.classifier,
                &mut gen,
                &mut dis,
                x_train,
                &h_aug_train,
                y_train,
                x_val,
                &h_aug_val,
                y_val,
                stage2,
            )?;
            ckpt.stage_two = Some(summary(&r2, stage2.epochs));
            ckpt.stage_two_config = Some(stage2.clone());
            trace.extend(r2.trace);

            ckpt.gbdt = Some(gbdt_fit.model);
            ckpt.mapper = Some(mapper);
            ckpt.generator = Some(gen);
            ckpt.discriminator = Some(dis);
        }
    }

    Ok(TrainedModel { checkpoint: ckpt, trace, widths })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn within_band(count: usize, target: usize) -> bool {
        let lo = target as f64 * (1.0 - PARITY_BAND);
        let hi = target as f64 * (1.0 + PARITY_BAND);
        (count as f64) >= lo && (count as f64) <= hi
    }

    #[test]
    fn parity_widths_land_in_band_across_shapes() {
        for td in [8, 20, 45, 90, 160, 300, 512] {
            for d in [4, 8, 9, 13, 19, 30] {
                for p in [4, 8, 16] {
                    let w = parity_widths(td, d, p, 100).unwrap();
                    let clf = p + 1;
                    let base = mlp_count(d, w.base_hidden, p) + clf;
                    let rf = mlp_count(d, w.rf_no_fam_hidden, p)
                        + mlp_count(100, w.rf_no_fam_hidden, p)
                        + clf;
                    let gen = mlp_count(d, HIDDEN_WIDTH, p);
                    let dis = mlp_count(p, HIDDEN_WIDTH, p);
                    let no_faim = mlp_count(td, w.no_faim_hidden, p) + gen + dis + clf;
                    for (name, count) in
                        [("base", base), ("rf_no_fam", rf), ("no_faim", no_faim)]
                    {
                        assert!(
                            within_band(count, w.target),
                            "{name} at td={td} d={d} p={p}: {count} vs target {}",
                            w.target
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn parity_target_matches_component_sum() {
        let w = parity_widths(90, 9, 8, 100).unwrap();
        let faim = FaimParams::<f64>::init(90, 8, 0);
        let gen = init_generator::<f64>(9, 8, 0);
        let dis = init_discriminator::<f64>(8, 0);
        let clf = init_classifier::<f64>(8, 0);
        assert_eq!(
            w.target,
            faim.n_params() + gen.n_params() + dis.n_params() + clf.n_params()
        );
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::all() {
            assert_eq!(Variant::from_name(v.name()).unwrap(), v);
        }
        assert!(Variant::from_name("bogus").is_err());
    }

    fn toy_tensors(n: usize, d: usize, seed: u64) -> SplitTensors {
        use rand::Rng;
        let mut rng = fafcnn_core::rng::rng_from(seed);
        let mut gen_rows = |count: usize| -> (Vec<Vec<f64>>, Vec<u8>) {
            let mut xs = Vec::with_capacity(count);
            let mut ys = Vec::with_capacity(count);
            for _ in 0..count {
                let y = u8::from(rng.gen_bool(0.5));
                let center = if y == 1 { 1.0 } else { -1.0 };
                xs.push((0..d).map(|_| center + rng.gen_range(-0.8..0.8)).collect());
                ys.push(y);
            }
            (xs, ys)
        };
        let (x_train, y_train) = gen_rows(n);
        let (x_val, y_val) = gen_rows(n / 4);
        SplitTensors { x_train, y_train, x_val, y_val }
    }

    #[test]
    fn every_variant_trains_and_carries_its_components() {
        let tensors = toy_tensors(80, 5, 42);
        let s1 = StageOneConfig { epochs: 30, ..Default::default() };
        let s2 = StageTwoConfig { epochs: 30, ..Default::default() };
        let gbdt = GbdtConfig::default();
        let rf = RfConfig { n_trees: 10, ..Default::default() };
        for variant in Variant::all() {
            let model =
                train_variant(variant, &tensors, 3, &gbdt, &rf, 4, &s1, &s2).unwrap();
            let ckpt = &model.checkpoint;
            assert_eq!(ckpt.variant, variant.name());
            match variant {
                Variant::Full => {
                    assert!(ckpt.gbdt.is_some() && ckpt.faim.is_some());
                    assert!(ckpt.generator.is_some() && ckpt.discriminator.is_some());
                    assert!(ckpt.mapper.is_none() && ckpt.rf.is_none());
                    assert!(ckpt.stage_two.is_some());
                }
                Variant::Base => {
                    assert!(ckpt.generator.is_some());
                    assert!(ckpt.gbdt.is_none() && ckpt.faim.is_none());
                    assert!(ckpt.mapper.is_none() && ckpt.rf.is_none());
                    assert!(ckpt.stage_two.is_none());
                }
                Variant::RfNoFam => {
                    assert!(ckpt.generator.is_some() && ckpt.mapper.is_some());
                    assert!(ckpt.rf.is_some());
                    assert!(ckpt.gbdt.is_none() && ckpt.discriminator.is_none());
                }
                Variant::NoFaim => {
                    assert!(ckpt.gbdt.is_some() && ckpt.mapper.is_some());
                    assert!(ckpt.faim.is_none());
                    assert!(ckpt.generator.is_some() && ckpt.discriminator.is_some());
                    assert!(ckpt.stage_two.is_some());
                }
            }
            // Trace rows run 0..=epochs per trained stage.
            let stage1_rows = model.trace.iter().filter(|r| r.stage == 1).count();
            assert_eq!(stage1_rows, 31);
            if ckpt.stage_two.is_some() {
                let stage2_rows = model.trace.iter().filter(|r| r.stage == 2).count();
                assert_eq!(stage2_rows, 31);
            }
            // Reduced variants sit inside the parity band.
            let count = trainable_params(ckpt);
            if variant != Variant::Full {
                assert!(
                    within_band(count, model.widths.target),
                    "{variant}: {count} vs {}",
                    model.widths.target
                );
            } else {
                assert_eq!(count, model.widths.target);
            }
        }
    }

    #[test]
    fn supervised_variants_learn_separable_data() {
        let tensors = toy_tensors(120, 4, 7);
        let s1 = StageOneConfig { epochs: 150, ..Default::default() };
        let s2 = StageTwoConfig { epochs: 1, ..Default::default() };
        let gbdt = GbdtConfig::default();
        let rf = RfConfig { n_trees: 10, ..Default::default() };
        for variant in [Variant::Base, Variant::RfNoFam] {
            let model =
                train_variant(variant, &tensors, 5, &gbdt, &rf, 4, &s1, &s2).unwrap();
            let acc = model.checkpoint.stage_one.unwrap().best_val_acc;
            assert!(acc >= 0.9, "{variant}: val acc {acc}");
        }
    }

    #[test]
    fn joint_supervised_is_deterministic() {
        let tensors = toy_tensors(60, 5, 11);
        let s1 = StageOneConfig { epochs: 40, ..Default::default() };
        let s2 = StageTwoConfig { epochs: 1, ..Default::default() };
        let run = || {
            train_variant(
                Variant::RfNoFam,
                &tensors,
                9,
                &GbdtConfig::default(),
                &RfConfig { n_trees: 8, ..Default::default() },
                4,
                &s1,
                &s2,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(
            serde_json::to_string(&a.checkpoint).unwrap(),
            serde_json::to_string(&b.checkpoint).unwrap()
        );
    }

    #[test]
    fn runaway_stage2_aborts_with_non_finite_loss() {
        let tensors = toy_tensors(40, 3, 13);
        let s1 = StageOneConfig { epochs: 3, ..Default::default() };
        // A step size this large drives the generator output to overflow and
        // the generator loss through ln(0).
        let s2 = StageTwoConfig { epochs: 30, learning_rate: 1e200, ..Default::default() };
        let err = train_variant(
            Variant::Full,
            &tensors,
            1,
            &GbdtConfig::default(),
            &RfConfig { n_trees: 4, ..Default::default() },
            4,
            &s1,
            &s2,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::NonFiniteLoss { .. }), "{err}");
    }
}
