//! Scalar abstraction shared by every numerical kernel in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the library is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal is representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Smallest tolerance that makes sense for the type's precision.
    fn precision_floor() -> Self;
}

impl Real for f32 {
    fn precision_floor() -> Self {
        1e-6
    }
}

impl Real for f64 {
    fn precision_floor() -> Self {
        1e-14
    }
}

/// Reduces an angle into `[0, 2π)`.
#[inline]
pub fn wrap_phase<T: Real>(phi: T) -> T {
    let two_pi = T::TAU();
    let r = phi % two_pi;
    let r = if r < T::zero() { r + two_pi } else { r };
    // `r + two_pi` can round up to exactly 2π for tiny negative inputs.
    if r >= two_pi {
        T::zero()
    } else {
        r
    }
}

/// Signed difference `a - b` folded into `(-π, π]`.
#[inline]
pub fn phase_difference<T: Real>(a: T, b: T) -> T {
    let d = wrap_phase(a - b);
    if d > T::PI() {
        d - T::TAU()
    } else {
        d
    }
}
