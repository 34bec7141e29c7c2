//! Scalar abstraction for the numeric core.
//!
//! All tensor math is generic over [`Scalar`] so the same layer and
//! optimizer code runs at `f32` or `f64`. Training defaults to `f64`
//! (gradient checks need the headroom); checkpoints always store `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts from `f64`, panicking only for values no float type holds.
    fn from_real(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 value representable in scalar type")
    }

    /// Widens to `f64` (exact for `f32` and `f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar value representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
