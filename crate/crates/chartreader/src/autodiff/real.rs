//! Scalar abstraction so the same graph code runs at 32-bit (training) and
//! 64-bit (finite-difference gradient checks).

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point scalar usable by the tensor engine.
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + Debug + Send + Sync + 'static
{
    /// Lift an `f64` literal into this scalar type.
    fn c(v: f64) -> Self;
    /// Lower to `f64` (for logging and reports).
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn c(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn c(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
