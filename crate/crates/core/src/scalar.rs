//! Floating-point scalar abstraction for the numeric layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Scalar type the probability, classifier, context, GA, and fusion layers
/// are generic over. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Conversion from `f64`, used when seeding generic code with values
    /// produced by `f64`-only sources (RNG draws, integer counts).
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> f32 {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> f64 {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Pairwise (cascade) summation.
///
/// Splits at the midpoint, so summing a slice that is the concatenation of
/// two identical halves yields exactly twice the sum of one half. Gradient
/// accumulation in the classifier trainer relies on this.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= 8 {
        let mut acc = T::zero();
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}
