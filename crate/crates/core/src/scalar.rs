//! Scalar abstraction shared by every numeric module.
//!
//! Training and gradient checks run in `f64`; files and the wire carry `f32`.
//! Nothing in the math assumes one or the other.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy literal conversion. Panics only if `T` cannot represent a finite f64 at all.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal out of range")
    }

    #[inline]
    fn of_f32(v: f32) -> Self {
        Self::lit(f64::from(v))
    }

    #[inline]
    fn as_f32(self) -> f32 {
        // NumCast for f32 rounds to nearest; non-finite values pass through.
        ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Largest value strictly below one.
    #[inline]
    fn one_below() -> Self {
        Self::one() - Self::epsilon() / Self::lit(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
