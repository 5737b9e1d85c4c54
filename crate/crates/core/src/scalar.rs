//! Scalar abstraction for the numeric core.
//!
//! The kernel, Gaussian process and coregionalization code is written against
//! [`Scalar`] so it can run in either `f32` or `f64`. Everything that talks to
//! the outside world (configurations, objectives, reports) stays in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the GP and LCM machinery.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Smallest relative diagonal jitter that is meaningful for this type.
    fn jitter_floor() -> Self;
}

impl Scalar for f32 {
    fn jitter_floor() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn jitter_floor() -> Self {
        1e-10
    }
}

/// Lossy conversion from `f64` literals into `T`.
#[inline]
pub fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
