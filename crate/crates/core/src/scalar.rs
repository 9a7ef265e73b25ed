//! Scalar abstraction for the math core.
//!
//! The expectation equations, parameter maps and gradients are written against
//! this trait so they work for both `f32` and `f64`. Everything downstream of
//! the math core (training, sampling, statistics, serialization) is pinned to
//! `f64` via the [`crate::Real`] alias because those layers carry bit-exact
//! reproducibility contracts.

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for constants inside generic code.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in every Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable softplus: `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus<F: Scalar>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, stable for large `|x|`.
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
