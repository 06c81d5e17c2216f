//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the library is generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Allowed deviation of a distribution's total mass from one.
    fn simplex_tolerance() -> Self;

    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn simplex_tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    #[inline]
    fn simplex_tolerance() -> Self {
        1e-5
    }
}
