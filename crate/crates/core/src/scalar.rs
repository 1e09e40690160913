use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the model math is written against.
///
/// Implemented for `f32` and `f64`. Data ingestion and simulation work in
/// `f64`; design matrices, coefficients and working quantities are generic.
pub trait Scalar:
    NdFloat
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
{
    /// Pivot threshold (relative to the largest diagonal) below which a
    /// Cholesky factorization is treated as singular.
    const PIVOT_TOL: Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Scalar for f32 {
    const PIVOT_TOL: Self = 1e-5;
}

impl Scalar for f64 {
    const PIVOT_TOL: Self = 1e-12;
}
