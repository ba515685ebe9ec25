//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the channel model and solvers are generic over.
///
/// Implemented for `f32` and `f64`. Literal constants are lifted with
/// [`Scalar::of`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values at all, which never happens for the
    /// implemented types.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `10^(db/10)`
    #[inline]
    fn from_db(db: Self) -> Self {
        Self::of(10.0).powf(db / Self::of(10.0))
    }

    /// dBm to watts.
    #[inline]
    fn dbm_to_watts(dbm: Self) -> Self {
        Self::from_db(dbm) / Self::of(1000.0)
    }

    /// `log2(1 + sinr)`
    #[inline]
    fn shannon(sinr: Self) -> Self {
        sinr.ln_1p() / Self::LN_2()
    }

    #[allow(non_snake_case)]
    #[inline]
    fn LN_2() -> Self {
        Self::of(std::f64::consts::LN_2)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sum of an iterator, starting from zero.
pub fn sum<T: Scalar, I: IntoIterator<Item = T>>(it: I) -> T {
    it.into_iter().fold(T::zero(), |acc, x| acc + x)
}

/// `x` in watts to dBm.
pub fn watts_to_dbm<T: Scalar>(w: T) -> T {
    T::of(10.0) * (w * T::of(1000.0)).log10()
}
