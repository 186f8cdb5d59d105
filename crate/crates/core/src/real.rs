//! Scalar abstraction: the numerical core is generic over the floating-point
//! type through [`Real`], with `f64` as the working precision and `f32`
//! available for quick low-precision experiments.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the library.
pub trait Real:
    nalgebra::RealField
    + FromPrimitive
    + ToPrimitive
    + Copy
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
{
    /// Shorthand for converting an `f64` literal into the scalar type.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal representable in scalar type")
    }

    /// Lossy conversion back to `f64`, used for reporting and serialization.
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }

    fn is_finite_scalar(self) -> bool;
}

impl Real for f32 {
    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
}

impl Real for f64 {
    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
}
