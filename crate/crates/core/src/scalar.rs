//! Floating point abstraction shared by the classifier, reranker and metrics.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar the numeric code is generic over: `f32` or `f64`.
///
/// Models are trained and served in `f32`; `f64` is used where a check needs
/// the extra headroom (finite differences, exact hand-evaluated scores).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; always succeeds for finite input.
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("finite f64 converts to scalar")
    }

    fn of_usize(x: usize) -> Self {
        <Self as NumCast>::from(x).expect("usize converts to scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("scalar converts to f32")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::Scalar;

    #[test]
    fn conversions() {
        assert_eq!(f32::of(0.5), 0.5f32);
        assert_eq!(f64::of_usize(7), 7.0);
        assert_eq!(0.25f32.as_f64(), 0.25);
    }
}
