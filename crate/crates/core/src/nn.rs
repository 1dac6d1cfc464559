//! Small dense-network building blocks: a two-layer perceptron with
//! selectable output activation and an affine-plus-sigmoid classifier head.
//! Backward passes are hand-written; every parameter struct doubles as its
//! own gradient container via [`zeros_like`](Mlp2::zeros_like).

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::rng_from;
use crate::scalar::{sigmoid, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<R: Real>(self, z: R) -> R {
        match self {
            Activation::Relu => z.max(R::zero()),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative in terms of pre-activation z and output a. ReLU′(0) = 0.
    fn derivative<R: Real>(self, z: R, a: R) -> R {
        match self {
            Activation::Relu => {
                if z > R::zero() {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Activation::Sigmoid => a * (R::one() - a),
        }
    }
}

/// Two dense layers: in_dim → hidden (ReLU) → out_dim (`out_act`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp2<R> {
    /// hidden × in_dim
    pub w1: Vec<Vec<R>>,
    pub b1: Vec<R>,
    /// out_dim × hidden
    pub w2: Vec<Vec<R>>,
    pub b2: Vec<R>,
    pub out_act: Activation,
}

/// Per-sample forward cache consumed by [`Mlp2::backward`].
#[derive(Clone, Debug)]
pub struct Mlp2Cache<R> {
    pub z1: Vec<R>,
    pub a1: Vec<R>,
    pub z2: Vec<R>,
    pub out: Vec<R>,
}

impl<R: Real> Mlp2<R> {
    /// Weights from N(0, 0.1), biases zero.
    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, out_act: Activation, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0f64, 0.1).expect("valid std");
        let mut matrix = |rows: usize, cols: usize| -> Vec<Vec<R>> {
            (0..rows)
                .map(|_| (0..cols).map(|_| R::of(normal.sample(&mut rng))).collect())
                .collect()
        };
        Mlp2 {
            w1: matrix(hidden, in_dim),
            b1: vec![R::zero(); hidden],
            w2: matrix(out_dim, hidden),
            b2: vec![R::zero(); out_dim],
            out_act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.first().map_or(0, Vec::len)
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.len()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.len()
    }

    pub fn forward(&self, x: &[R]) -> Vec<R> {
        self.forward_cached(x).out
    }

    pub fn forward_cached(&self, x: &[R]) -> Mlp2Cache<R> {
        let z1: Vec<R> = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(row, &b)| dot(row, x) + b)
            .collect();
        let a1: Vec<R> = z1.iter().map(|&z| Activation::Relu.apply(z)).collect();
        let z2: Vec<R> = self
            .w2
            .iter()
            .zip(&self.b2)
            .map(|(row, &b)| dot(row, &a1) + b)
            .collect();
        let out: Vec<R> = z2.iter().map(|&z| self.out_act.apply(z)).collect();
        Mlp2Cache { z1, a1, z2, out }
    }

    /// Accumulates parameter gradients for one sample given ∂L/∂out, and
    /// optionally adds ∂L/∂x into `d_input`.
    pub fn backward(
        &self,
        x: &[R],
        cache: &Mlp2Cache<R>,
        d_out: &[R],
        grads: &mut Mlp2<R>,
        mut d_input: Option<&mut [R]>,
    ) {
        let hidden = self.hidden_dim();
        let mut d_a1 = vec![R::zero(); hidden];
        for (k, row) in self.w2.iter().enumerate() {
            let dz2 = d_out[k] * self.out_act.derivative(cache.z2[k], cache.out[k]);
            if dz2 == R::zero() {
                continue;
            }
            for (h, &a) in cache.a1.iter().enumerate() {
                grads.w2[k][h] = grads.w2[k][h] + dz2 * a;
                d_a1[h] = d_a1[h] + dz2 * row[h];
            }
            grads.b2[k] = grads.b2[k] + dz2;
        }
        for (h, row) in self.w1.iter().enumerate() {
            let dz1 = d_a1[h] * Activation::Relu.derivative(cache.z1[h], cache.a1[h]);
            if dz1 == R::zero() {
                continue;
            }
            for (j, &xv) in x.iter().enumerate() {
                grads.w1[h][j] = grads.w1[h][j] + dz1 * xv;
            }
            grads.b1[h] = grads.b1[h] + dz1;
            if let Some(d_x) = d_input.as_deref_mut() {
                for (j, &w) in row.iter().enumerate() {
                    d_x[j] = d_x[j] + dz1 * w;
                }
            }
        }
    }

    pub fn zeros_like(&self) -> Mlp2<R> {
        Mlp2 {
            w1: self.w1.iter().map(|r| vec![R::zero(); r.len()]).collect(),
            b1: vec![R::zero(); self.b1.len()],
            w2: self.w2.iter().map(|r| vec![R::zero(); r.len()]).collect(),
            b2: vec![R::zero(); self.b2.len()],
            out_act: self.out_act,
        }
    }

    pub fn n_params(&self) -> usize {
        self.hidden_dim() * (self.in_dim() + 1) + self.out_dim() * (self.hidden_dim() + 1)
    }

    pub fn write_flat(&self, out: &mut Vec<R>) {
        for row in &self.w1 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b1);
        for row in &self.w2 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b2);
    }

    pub fn read_flat(&mut self, src: &[R]) -> usize {
        let mut k = 0;
        for row in &mut self.w1 {
            for v in row {
                *v = src[k];
                k += 1;
            }
        }
        for v in &mut self.b1 {
            *v = src[k];
            k += 1;
        }
        for row in &mut self.w2 {
            for v in row {
                *v = src[k];
                k += 1;
            }
        }
        for v in &mut self.b2 {
            *v = src[k];
            k += 1;
        }
        k
    }
}

/// Affine map to one logit plus sigmoid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Classifier<R> {
    pub w: Vec<R>,
    pub b: R,
}

impl<R: Real> Classifier<R> {
    pub fn init(in_dim: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0f64, 0.1).expect("valid std");
        Classifier {
            w: (0..in_dim).map(|_| R::of(normal.sample(&mut rng))).collect(),
            b: R::zero(),
        }
    }

    pub fn logit(&self, v: &[R]) -> R {
        dot(&self.w, v) + self.b
    }

    pub fn proba(&self, v: &[R]) -> R {
        sigmoid(self.logit(v))
    }

    /// Accumulates gradients for one sample given ∂L/∂logit; returns nothing,
    /// the input gradient w · d_logit goes into `d_input` when provided.
    pub fn backward(
        &self,
        v: &[R],
        d_logit: R,
        grads: &mut Classifier<R>,
        d_input: Option<&mut [R]>,
    ) {
        for (j, &x) in v.iter().enumerate() {
            grads.w[j] = grads.w[j] + d_logit * x;
        }
        grads.b = grads.b + d_logit;
        if let Some(d_v) = d_input {
            for (j, &w) in self.w.iter().enumerate() {
                d_v[j] = d_v[j] + d_logit * w;
            }
        }
    }

    pub fn zeros_like(&self) -> Classifier<R> {
        Classifier { w: vec![R::zero(); self.w.len()], b: R::zero() }
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + 1
    }

    pub fn write_flat(&self, out: &mut Vec<R>) {
        out.extend_from_slice(&self.w);
        out.push(self.b);
    }

    pub fn read_flat(&mut self, src: &[R]) -> usize {
        let n = self.w.len();
        self.w.copy_from_slice(&src[..n]);
        self.b = src[n];
        n + 1
    }
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(R::zero(), |acc, (&x, &y)| acc + x * y)
}
