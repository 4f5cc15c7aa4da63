//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the dictionary analysis and the solvers.
///
/// Implemented for `f32` and `f64`. Math goes through [`RealField`]; the
/// `num-traits` conversions move constants and diagnostics in and out.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Send + Sync + 'static
{
    fn infinity() -> Self;

    fn machine_epsilon() -> Self;

    /// Converts an `f64` constant. Every constant used in this crate is representable.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Real for f32 {
    fn infinity() -> Self {
        f32::INFINITY
    }
    fn machine_epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn infinity() -> Self {
        f64::INFINITY
    }
    fn machine_epsilon() -> Self {
        f64::EPSILON
    }
}
