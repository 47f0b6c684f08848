//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that does arithmetic on intensities, weights or features is
//! generic over [`Real`], which is implemented for `f32` and `f64`. File
//! formats fix their own on-disk precision and convert at the boundary.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// floating point scalar: f32 or f64
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or intermediate into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        // from_f64 is total for f32/f64 (overflow goes to inf)
        Self::from_f64(v).expect("f64 converts to any Real")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::lit(v as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product of two equal-length slices.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Squared Euclidean distance.
#[inline]
pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Median of a scratch buffer (reordered in place). Even counts give the mean
/// of the two middle values.
pub(crate) fn median_in_place<T: Real>(buf: &mut [T]) -> T {
    let n = buf.len();
    assert!(n > 0, "median of empty slice");
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite values");
    let mid = n / 2;
    let (lower, upper, _) = buf.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower
            .iter()
            .copied()
            .fold(T::neg_infinity(), |m, v| if v > m { v } else { m });
        (lower_max + upper) / T::lit(2.0)
    }
}
