use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the whole crate is generic over.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + LowerExp + Send + Sync
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn re<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable")
}

/// Builds a complex scalar from two `f64` parts.
#[inline]
pub fn cx<T: Real>(r: f64, i: f64) -> Complex<T> {
    Complex::new(re(r), re(i))
}

/// Lifts a real into the complex field.
#[inline]
pub fn lift<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Rank and residual tolerances used together by most checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances<T> {
    /// Relative singular-value cutoff for rank decisions.
    pub rank: T,
    /// Threshold on identity residuals.
    pub residual: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Tolerances {
            rank: re(1e-10),
            residual: re(1e-9),
        }
    }
}

impl<T: Real> Tolerances<T> {
    pub fn new(rank: T, residual: T) -> Self {
        Tolerances { rank, residual }
    }
}
