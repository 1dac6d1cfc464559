//! Feature alignment networks and losses: a generator G mapping original
//! features into the p-dimensional representation space, a discriminator D
//! that separates generated representations from the interaction module's
//! h_aug, the sigmoid classifier head F, and the three losses
//!
//! ```text
//! L_D   = −Σ_i ‖D(h_i) − D(h_aug,i)‖₁      (same-index pairs, minimized in θ)
//! L_G   = Σ_i ‖D(G(x_i)) − 1‖₁             (θ frozen)
//! L_aux = mean_i BCE(F(h_i), y_i)          (probabilities clamped)
//! ```
//!
//! The L1 terms use the subgradient convention sign(0) = 0; BCE gradients
//! are zero wherever the probability clamp is active so analytic and
//! finite-difference values agree everywhere.

use crate::nn::{Activation, Classifier, Mlp2};
use crate::scalar::{clamp_prob, sigmoid, sign, Real};

/// Hidden width shared by the generator and discriminator.
pub const HIDDEN_WIDTH: usize = 16;

/// d → 16 → p with ReLU on both layers. The output layer starts two orders
/// of magnitude smaller than the hidden one, so the untrained generator maps
/// every sample close to h = 0 and a fused prediction degrades gracefully to
/// the attenuated h_aug branch instead of mixing in random noise. Exactly
/// zero would park the output ReLU on its kink, where the subgradient
/// convention pins the gradient to zero and no update could revive it.
pub fn init_generator<R: Real>(in_dim: usize, p: usize, seed: u64) -> Mlp2<R> {
    let mut gen = Mlp2::init(in_dim, HIDDEN_WIDTH, p, Activation::Relu, seed);
    for row in &mut gen.w2 {
        for w in row.iter_mut() {
            *w = *w * R::of(0.01);
        }
    }
    gen
}

/// p → 16 → p with ReLU hidden and sigmoid output. The output layer starts
/// small so early discriminator outputs sit near 0.5 and its first decision
/// surfaces grow out of the data rather than the init draw; the generator's
/// early alignment gradient then points at the h_aug cloud instead of
/// chasing arbitrary initial boundaries.
pub fn init_discriminator<R: Real>(p: usize, seed: u64) -> Mlp2<R> {
    let mut dis = Mlp2::init(p, HIDDEN_WIDTH, p, Activation::Sigmoid, seed);
    for row in &mut dis.w2 {
        for w in row.iter_mut() {
            *w = *w * R::of(0.01);
        }
    }
    dis
}

/// Affine p → 1 plus sigmoid.
pub fn init_classifier<R: Real>(p: usize, seed: u64) -> Classifier<R> {
    Classifier::init(p, seed)
}

pub fn generator_forward<R: Real>(gen: &Mlp2<R>, x: &[R]) -> Vec<R> {
    gen.forward(x)
}

pub fn discriminator_forward<R: Real>(dis: &Mlp2<R>, v: &[R]) -> Vec<R> {
    dis.forward(v)
}

pub fn classifier_forward<R: Real>(clf: &Classifier<R>, v: &[R]) -> R {
    clf.proba(v)
}

/// Binary cross-entropy of one probability against a 0/1 label, with the
/// probability clamped away from 0 and 1.
pub fn bce<R: Real>(prob: R, label: u8) -> R {
    let p = clamp_prob(prob);
    if label == 1 {
        -p.ln()
    } else {
        -(R::one() - p).ln()
    }
}

/// ∂BCE/∂logit for a sigmoid probability: p − y, or 0 where the clamp binds.
pub fn bce_grad_logit<R: Real>(prob: R, label: u8) -> R {
    if prob != clamp_prob(prob) {
        return R::zero();
    }
    prob - R::of(f64::from(label))
}

/// L_D from precomputed discriminator outputs, paired by index.
pub fn loss_discriminator_from_outputs<R: Real>(d_gen: &[Vec<R>], d_aug: &[Vec<R>]) -> R {
    debug_assert_eq!(d_gen.len(), d_aug.len());
    let mut total = R::zero();
    for (g, a) in d_gen.iter().zip(d_aug) {
        for (&gv, &av) in g.iter().zip(a) {
            total = total + (gv - av).abs();
        }
    }
    -total
}

/// L_D over same-index (h, h_aug) pairs.
pub fn loss_discriminator<R: Real>(dis: &Mlp2<R>, gen_h: &[Vec<R>], aug_h: &[Vec<R>]) -> R {
    let d_gen: Vec<Vec<R>> = gen_h.iter().map(|h| dis.forward(h)).collect();
    let d_aug: Vec<Vec<R>> = aug_h.iter().map(|h| dis.forward(h)).collect();
    loss_discriminator_from_outputs(&d_gen, &d_aug)
}

/// Per-sample ‖D(h_i) − D(h_aug,i)‖₁, the mode-collapse diagnostic.
pub fn pair_gaps<R: Real>(dis: &Mlp2<R>, gen_h: &[Vec<R>], aug_h: &[Vec<R>]) -> Vec<R> {
    gen_h
        .iter()
        .zip(aug_h)
        .map(|(g, a)| {
            let dg = dis.forward(g);
            let da = dis.forward(a);
            dg.iter()
                .zip(&da)
                .fold(R::zero(), |acc, (&x, &y)| acc + (x - y).abs())
        })
        .collect()
}

/// L_G = Σ_i ‖D(G(x_i)) − 1‖₁ with the discriminator held fixed.
pub fn loss_generator<R: Real>(gen: &Mlp2<R>, dis: &Mlp2<R>, xs: &[Vec<R>]) -> R {
    let mut total = R::zero();
    for x in xs {
        let out = dis.forward(&gen.forward(x));
        for &o in &out {
            total = total + (o - R::one()).abs();
        }
    }
    total
}

/// Mean clamped BCE of F(h_i) against y_i.
pub fn loss_aux<R: Real>(clf: &Classifier<R>, hs: &[Vec<R>], labels: &[u8]) -> R {
    debug_assert_eq!(hs.len(), labels.len());
    let mut total = R::zero();
    for (h, &y) in hs.iter().zip(labels) {
        total = total + bce(clf.proba(h), y);
    }
    total / R::of(hs.len() as f64)
}

/// ∂L_D/∂θ over the paired batch. The generator representations enter as
/// fixed inputs.
pub fn grad_discriminator<R: Real>(
    dis: &Mlp2<R>,
    gen_h: &[Vec<R>],
    aug_h: &[Vec<R>],
) -> Mlp2<R> {
    let mut grads = dis.zeros_like();
    let p = dis.out_dim();
    let mut d_out_gen = vec![R::zero(); p];
    let mut d_out_aug = vec![R::zero(); p];
    for (g, a) in gen_h.iter().zip(aug_h) {
        let cg = dis.forward_cached(g);
        let ca = dis.forward_cached(a);
        for k in 0..p {
            let s = sign(cg.out[k] - ca.out[k]);
            d_out_gen[k] = -s;
            d_out_aug[k] = s;
        }
        dis.backward(g, &cg, &d_out_gen, &mut grads, None);
        dis.backward(a, &ca, &d_out_aug, &mut grads, None);
    }
    grads
}

/// ∂L_G/∂φ with θ frozen: the discriminator only relays input gradients.
pub fn grad_generator_adversarial<R: Real>(
    gen: &Mlp2<R>,
    dis: &Mlp2<R>,
    xs: &[Vec<R>],
) -> Mlp2<R> {
    let mut grads = gen.zeros_like();
    let mut dis_scratch = dis.zeros_like();
    let p = dis.out_dim();
    let mut d_out = vec![R::zero(); p];
    for x in xs {
        let cg = gen.forward_cached(x);
        let cd = dis.forward_cached(&cg.out);
        for k in 0..p {
            d_out[k] = sign(cd.out[k] - R::one());
        }
        let mut d_h = vec![R::zero(); p];
        dis.backward(&cg.out, &cd, &d_out, &mut dis_scratch, Some(&mut d_h));
        gen.backward(x, &cg, &d_h, &mut grads, None);
    }
    grads
}

/// ∂L_aux/∂ψ over fixed representations.
pub fn grad_aux_classifier<R: Real>(
    clf: &Classifier<R>,
    hs: &[Vec<R>],
    labels: &[u8],
) -> Classifier<R> {
    let mut grads = clf.zeros_like();
    let inv_n = R::one() / R::of(hs.len() as f64);
    for (h, &y) in hs.iter().zip(labels) {
        let d_logit = bce_grad_logit(clf.proba(h), y) * inv_n;
        clf.backward(h, d_logit, &mut grads, None);
    }
    grads
}

/// ∂L_aux/∂φ with ψ frozen: BCE gradient relayed through F into G.
pub fn grad_aux_generator<R: Real>(
    clf: &Classifier<R>,
    gen: &Mlp2<R>,
    xs: &[Vec<R>],
    labels: &[u8],
) -> Mlp2<R> {
    let mut grads = gen.zeros_like();
    let mut clf_scratch = clf.zeros_like();
    let inv_n = R::one() / R::of(xs.len() as f64);
    for (x, &y) in xs.iter().zip(labels) {
        let cg = gen.forward_cached(x);
        let d_logit = bce_grad_logit(sigmoid(clf.logit(&cg.out)), y) * inv_n;
        let mut d_h = vec![R::zero(); cg.out.len()];
        clf.backward(&cg.out, d_logit, &mut clf_scratch, Some(&mut d_h));
        gen.backward(x, &cg, &d_h, &mut grads, None);
    }
    grads
}
