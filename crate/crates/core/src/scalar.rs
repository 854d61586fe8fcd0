//! Floating point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type: implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Default slack for hypothesis checks (monotonicity, properness, structure).
    fn check_tol() -> Self;

    /// Slack used when validating symmetric-matrix inequalities via eigenvalues.
    fn eig_tol() -> Self;

    /// Converts a literal. Panics only if the literal is not representable,
    /// which cannot happen for finite `f64` inputs and the two implementors.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable as scalar")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable as scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f64 {
    fn check_tol() -> Self {
        1e-9
    }

    fn eig_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn check_tol() -> Self {
        1e-4
    }

    fn eig_tol() -> Self {
        1e-5
    }
}

/// Max of two scalars that propagates neither NaN preference nor order surprises.
#[inline]
pub(crate) fn smax<S: Scalar>(a: S, b: S) -> S {
    if a >= b {
        a
    } else {
        b
    }
}

#[inline]
pub(crate) fn smin<S: Scalar>(a: S, b: S) -> S {
    if a <= b {
        a
    } else {
        b
    }
}
