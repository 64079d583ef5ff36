//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar the numeric core is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` (exact for `f64`, rounded for `f32`).
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts into any float scalar")
    }

    /// Widening conversion to `f64` (exact for both supported scalars).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float scalar converts into f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
