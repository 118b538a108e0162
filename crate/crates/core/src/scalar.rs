//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// Besides the arithmetic bounds, each scalar carries the default
/// tolerances that make sense at its precision.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Default absolute tolerance on the max-norm symplecticity residual.
    const SYMPLECTIC_TOL: f64;
    /// Default relative tolerance for structural zeros.
    const ZERO_TOL: f64;
    /// Default relative threshold below which a subvector counts as vanishing.
    const GENERICITY_TOL: f64;

    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn two() -> Self {
        Self::lit(2.0)
    }

    fn pi() -> Self {
        Self::lit(std::f64::consts::PI)
    }
}

impl Real for f64 {
    const SYMPLECTIC_TOL: f64 = 1e-10;
    const ZERO_TOL: f64 = 1e-8;
    const GENERICITY_TOL: f64 = 1e-8;
}

impl Real for f32 {
    const SYMPLECTIC_TOL: f64 = 1e-4;
    const ZERO_TOL: f64 = 1e-3;
    const GENERICITY_TOL: f64 = 1e-3;
}

/// Wraps an angle into `(-pi, pi]`.
pub(crate) fn wrap_angle<T: Real>(a: T) -> T {
    let pi = T::pi();
    let two_pi = pi + pi;
    let mut x = a % two_pi;
    if x <= -pi {
        x = x + two_pi;
    } else if x > pi {
        x = x - two_pi;
    }
    x
}
