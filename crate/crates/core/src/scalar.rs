//! Numeric scalar abstraction shared by the signal-processing modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating point sample type: `f32` or `f64`.
///
/// The streaming engine, RVQ, metrics and augmentation code are written once
/// against this trait. `f32` is the deployment type; `f64` is used by oracle
/// tests where rounding must not blur an exact comparison.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + rustfft::FftNum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` (constants, configuration values).
    fn of(v: f64) -> Self;

    /// Conversion from the on-disk `f32` representation.
    fn from_f32(v: f32) -> Self;

    /// Conversion to the on-disk `f32` representation.
    fn to_f32(self) -> f32;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn from_f32(v: f32) -> Self {
        v
    }
    #[inline]
    fn to_f32(self) -> f32 {
        self
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    #[inline]
    fn to_f32(self) -> f32 {
        self as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
