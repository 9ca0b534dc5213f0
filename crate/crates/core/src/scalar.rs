//! Floating-point abstraction shared by the analytical modules.
//!
//! Closed-form quantities (losses, gradients, projections, bounds) are generic
//! over [`Scalar`] so they can be evaluated in `f32` or `f64`. Random sampling
//! always draws in `f64` and converts at the boundary.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type, implemented for [`f32`] and [`f64`].
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `1 - exp(-x)` without cancellation for small `x`.
    fn one_minus_exp_neg(self) -> Self {
        -(-self).exp_m1()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Area of a disk of the given radius.
pub(crate) fn disk_area<T: Scalar>(radius: T) -> T {
    T::PI() * radius * radius
}
