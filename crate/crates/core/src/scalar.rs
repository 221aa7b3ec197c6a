//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real floating-point scalar the toolkit is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances throughout the crate are
/// declared in `f64` and converted with [`lit`]; anything tighter than the
/// type's resolution is clamped by [`tol`].
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// A tolerance of `v`, but never below 64 ulps of `T`.
#[inline]
pub fn tol<T: Real>(v: f64) -> T {
    let floor = T::epsilon() * lit(64.0);
    let t = lit::<T>(v);
    if t < floor {
        floor
    } else {
        t
    }
}

#[inline]
pub(crate) fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(tol::<f64>(1e-12), 1e-12);
        assert!(tol::<f32>(1e-12) > 1e-6);
        assert_eq!(lit::<f32>(0.5), 0.5f32);
    }
}
