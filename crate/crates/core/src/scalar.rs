//! Generic scalar abstraction over `f32`/`f64`.
//!
//! All numerics in this crate are generic over [`Real`]: training runs in
//! `f32`, while finite-difference oracles and gradient checks instantiate the
//! same code in `f64`.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};

pub trait Real:
    Float
    + FromPrimitive
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
    /// Shorthand for converting an `f64` literal into the scalar type.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable in scalar type")
    }

    fn to_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
