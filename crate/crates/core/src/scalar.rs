//! Numeric traits shared by the simulator and the evaluation kit.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, NumCast, Signed, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: f32 or f64.
///
/// Geometry, kinematics and the text scorers need transcendental functions,
/// so they are written against this trait.
pub trait Real:
    Float
    + FromPrimitive
    + NumCast
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 literal representable")
    }

    fn pi() -> Self {
        Self::lit(std::f64::consts::PI)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Field-like scalar for weighted averages and losses.
///
/// Implemented for the float types and for `Ratio<i64>`, which lets the
/// ensemble weights live exactly on the simplex.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Tolerance used when checking that weights sum to one.
    fn simplex_tolerance() -> Self;

    fn from_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite value representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn simplex_tolerance() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn simplex_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for Ratio<i64> {
    fn simplex_tolerance() -> Self {
        Ratio::from_integer(0)
    }
}
