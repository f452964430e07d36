//! Floating-point scalars for the continuous pricing formulas.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// A real-number type the pool analytics can be evaluated in.
pub trait Scalar: Float + Debug + Display + Send + Sync + 'static {
    /// Comparison slack for identities that hold exactly in real arithmetic.
    fn tolerance() -> Self;

    fn from_f64(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite f64 converts")
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn approx_eq<T: Scalar>(a: T, b: T, tol: T) -> bool {
    let scale = T::one().max(a.abs()).max(b.abs());
    (a - b).abs() <= tol * scale
}
