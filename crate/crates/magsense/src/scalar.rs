//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Random draws are always made in `f64`
//! and converted, so an `f32` run sees the same sample sequence as an
//! `f64` run, just rounded.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating-point scalar used throughout the toolkit.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy view as `f64`, for formatting and reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from(x).expect("f64 constant representable in scalar type")
}

/// Tag naming the scalar type in serialized containers.
pub fn scalar_tag<T: Real>() -> &'static str {
    match std::mem::size_of::<T>() {
        4 => "f32",
        8 => "f64",
        _ => "scalar",
    }
}
