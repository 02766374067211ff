use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type of tensors: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// `e^self` from libm, independent of whether std is linked.
    fn natural_exp(self) -> Self;
    /// `ln(self)` from libm, independent of whether std is linked.
    fn natural_log(self) -> Self;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn natural_exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn natural_log(self) -> Self {
        libm::logf(self)
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn natural_exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn natural_log(self) -> Self {
        libm::log(self)
    }
}
