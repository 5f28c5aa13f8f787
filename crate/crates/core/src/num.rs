//! Scalar abstraction and the logistic-link primitives used everywhere else.
//!
//! All numeric code in this crate is generic over [`Scalar`]; `f64` is the
//! default at the crate root and `f32` works for the core math.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Floating-point scalar the estimation routines are generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Display
    + Debug
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from `f64`; panics only on values unrepresentable in any float.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + Sum
        + Display
        + Debug
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// z quantile for two-sided 95% intervals.
pub const Z_975: f64 = 1.959964;

/// Inverse logit, computed sign-split so neither branch overflows.
pub fn expit<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Log-odds. Errors on p outside the open unit interval; callers are
/// expected to clamp probabilities before transforming.
pub fn logit<S: Scalar>(p: S) -> Result<S, LogitDomainError> {
    if p <= S::zero() || p >= S::one() || !p.is_finite() {
        return Err(LogitDomainError {
            value: p.to_f64_lossy(),
        });
    }
    Ok((p / (S::one() - p)).ln())
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("logit domain error: p = {value} is not in (0, 1)")]
pub struct LogitDomainError {
    pub value: f64,
}
