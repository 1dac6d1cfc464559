//! Scalar abstraction for the model math.
//!
//! Everything numeric in the model modules is generic over [`Real`] so the
//! same code runs in `f32` or `f64`. The crate-root aliases pin `f64`, which
//! is what the CLI and all serialized artifacts use.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` constant or config value.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant must be representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

pub fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

/// Clamps a probability into [1e-7, 1 - 1e-7] before it enters a logarithm.
pub fn clamp_prob<R: Real>(p: R) -> R {
    let lo = R::of(1e-7);
    let hi = R::one() - lo;
    p.max(lo).min(hi)
}

/// Sign with the subgradient-at-zero convention sign(0) = 0.
pub fn sign<R: Real>(v: R) -> R {
    if v > R::zero() {
        R::one()
    } else if v < R::zero() {
        -R::one()
    } else {
        R::zero()
    }
}
