//! Numeric scalar abstraction for the metric and threshold code.
//!
//! Box overlap, detection F1 and threshold filtering only need field
//! arithmetic and ordering, so they are written once over [`Scalar`] and
//! instantiated with `f64` for production use and with an exact rational
//! type (see [`crate::Exact`]) where a test or a report needs bit-exact
//! fractions such as `1/3`.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A number usable by the metric code: `f32`, `f64` or `Ratio<i64>`.
pub trait Scalar:
    Num + Copy + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Exact conversion of a count. Panics only if the count does not fit
    /// the scalar's integer range, which cannot happen for box areas on the
    /// 0..=1000 grid.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar")
    }

    /// `num / den`, computed in the scalar's own arithmetic.
    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    /// Conversion from a configuration value (thresholds are configured as
    /// decimal reals).
    fn from_real(v: f64) -> Self {
        Self::from_f64(v).expect("finite threshold")
    }

    fn to_real(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// Harmonic mean of two non-negative values, `0` when both are zero.
pub fn harmonic_mean<S: Scalar>(a: S, b: S) -> S {
    let sum = a + b;
    if sum == S::zero() {
        S::zero()
    } else {
        (S::one() + S::one()) * a * b / sum
    }
}
