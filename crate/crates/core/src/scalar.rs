//! Scalar abstraction: the solver core is generic over the floating point
//! type; `f64` is the production type and `f32` is available for cheap
//! exploratory runs.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::FftNum;

/// Floating point scalar usable for the spectral solver: `f32` or `f64`.
pub trait Scalar: Float + FloatConst + FromPrimitive + NumAssign + FftNum {}

impl<T> Scalar for T where T: Float + FloatConst + FromPrimitive + NumAssign + FftNum {}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}
