//! Scalar abstraction for the numeric core.
//!
//! Everything numerical in this crate is generic over [`Real`], a thin
//! bundle of `num-traits` bounds satisfied by `f32` and `f64`. Use the
//! concrete aliases at the crate root unless you need the genericity.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + NumAssign + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lift an `f64` literal into the scalar type.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("literal out of range for scalar type")
    }

    /// Lift a `usize` (grid sizes, counts) into the scalar type.
    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count out of range for scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + NumAssign
        + FromPrimitive
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
