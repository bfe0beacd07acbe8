//! Scalar abstraction shared by the geometry and statistics code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the generic math: `f32` or `f64`.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Tolerance used when validating rotation matrices and unit vectors.
    fn validation_tolerance() -> Self;
    /// Drift above which a composed rotation is projected back onto SO(3).
    fn renormalize_threshold() -> Self;
    /// Smallest camera-frame depth that is not considered degenerate.
    fn min_depth() -> Self;
}

impl Scalar for f64 {
    fn validation_tolerance() -> Self {
        1e-7
    }
    fn renormalize_threshold() -> Self {
        1e-9
    }
    fn min_depth() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn validation_tolerance() -> Self {
        1e-4
    }
    fn renormalize_threshold() -> Self {
        1e-5
    }
    fn min_depth() -> Self {
        1e-6
    }
}

/// Converts an `f64` literal into the target scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Lossy conversion back to `f64` for reporting.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
