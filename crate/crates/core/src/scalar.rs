//! Scalar abstractions shared by the geometric and the exact-arithmetic code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};

/// Floating-point scalar used by the geometry, field and cone code.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static {
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Absolute tolerance used by the 1-D minimizers.
    fn solver_tolerance() -> Self;
}

impl Real for f32 {
    fn solver_tolerance() -> Self {
        1e-6
    }
}

impl Real for f64 {
    fn solver_tolerance() -> Self {
        1e-12
    }
}

/// Ordered field used by the piecewise-affine DC calculus.
///
/// `f64` gives fast approximate answers; [`BigRational`] gives exact cell
/// arithmetic.
pub trait Exact: Clone + PartialOrd + Num + Signed + Debug + Send + Sync {
    fn from_f64_exact(x: f64) -> Option<Self>;
    fn approx(&self) -> f64;
    fn from_ratio(num: i64, den: i64) -> Self;
}

impl Exact for f64 {
    fn from_f64_exact(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }
    fn approx(&self) -> f64 {
        *self
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl Exact for BigRational {
    fn from_f64_exact(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }
    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}
