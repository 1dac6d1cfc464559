//! Feature-fusion disease classification on small tabular datasets.
//!
//! The pipeline has three learned pieces plus the experiment protocol around
//! them:
//!
//! * [`forest`] — gradient-boosted trees whose leaf memberships become a
//!   one-hot "correlation feature" vector `x_aug`, plus a random forest
//!   producing probability features for the ablation variants.
//! * [`faim`] — the feature interaction module: each active dimension of
//!   `x_aug` gets an embedding, and attention-weighted pairwise products of
//!   those embeddings are pooled into a dense representation `h_aug`.
//! * [`fam`] — the alignment module: a generator maps the original features
//!   to the same space as `h_aug`, a discriminator is trained to tell the two
//!   apart, and the generator is trained to fool it while an auxiliary
//!   classifier keeps the representation predictive.
//! * [`trainer`] — the two-stage optimization gluing the above together, with
//!   checkpoints and a finite-difference gradient audit.
//! * [`datakit`] / [`evalkit`] — the data protocol (median imputation,
//!   δ-perturbation, 8:1:1 splits, standardization) and the metrics side
//!   (confusion matrices, seed aggregation, Welch t-tests).
//!
//! Model math is generic over the [`Real`] scalar so everything can run in
//! `f32` or `f64`; the aliases below pin the `f64` instantiations used by the
//! CLI and all serialized artifacts.

pub mod datakit;
pub mod error;
pub mod evalkit;
pub mod faim;
pub mod fam;
pub mod forest;
pub mod hash;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{CoreError, Result};
pub use scalar::Real;

pub type Dataset64 = datakit::Dataset<f64>;
pub type GbdtModel64 = forest::GbdtModel<f64>;
pub type RfModel64 = forest::RfModel<f64>;
pub type FaimParams64 = faim::FaimParams<f64>;
pub type Mlp64 = nn::Mlp2<f64>;
pub type Classifier64 = nn::Classifier<f64>;
pub type Checkpoint64 = trainer::Checkpoint<f64>;
