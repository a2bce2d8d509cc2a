use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};

/// Scalar type the whole library is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + NumAssign + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Short name used in run metadata and error messages.
    const NAME: &'static str;
    /// Factor applied to double-precision tolerances.
    const TOL_SCALE: f64;

    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `base` (a double-precision tolerance) relaxed for this precision.
    fn tol(base: f64) -> Self {
        Self::of(base * Self::TOL_SCALE)
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";
    const TOL_SCALE: f64 = 1.0;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
    const TOL_SCALE: f64 = 1e4;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
