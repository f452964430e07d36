//! Closed-form constant-product pricing.
//!
//! For a pool holding `a` of token0 and `b` of token1 with `a * b = k`, the
//! price of token0 in token1 is `k / a^2`. These functions are generic over
//! the float type so the same formulas can be checked in `f32` and `f64`.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
}

/// Positive price of token0 expressed in token1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceRatio<T>(T);

impl<T: Scalar> PriceRatio<T> {
    pub fn new(value: T) -> Result<Self, AnalyticsError> {
        positive(value, "price").map(PriceRatio)
    }

    pub fn value(self) -> T {
        self.0
    }

    /// Same price quoted the other way round.
    pub fn inverse(self) -> Self {
        PriceRatio(self.0.recip())
    }
}

fn positive<T: Scalar>(x: T, name: &'static str) -> Result<T, AnalyticsError> {
    if x.is_finite() && x > T::zero() {
        Ok(x)
    } else {
        Err(AnalyticsError::NonPositive(name))
    }
}

/// `k / a^2`, the marginal price of token0.
pub fn spot_price<T: Scalar>(a: T, b: T) -> Result<PriceRatio<T>, AnalyticsError> {
    let a = positive(a, "reserve0")?;
    let b = positive(b, "reserve1")?;
    let k = a * b;
    PriceRatio::new(k / (a * a))
}

/// Reserves `(sqrt(k / p*), sqrt(k * p*))` once trading has moved the price to `p*`.
pub fn post_trade_reserves<T: Scalar>(k: T, p_star: PriceRatio<T>) -> Result<(T, T), AnalyticsError> {
    let k = positive(k, "k")?;
    let p = p_star.value();
    Ok(((k / p).sqrt(), (k * p).sqrt()))
}

/// Value of simply holding `(a, b)`, priced in token1 at `p*`.
pub fn hold_value<T: Scalar>(a: T, b: T, p_star: PriceRatio<T>) -> Result<T, AnalyticsError> {
    let a = positive(a, "a")?;
    let b = positive(b, "b")?;
    Ok(p_star.value() * a + b)
}

/// Value of a buy-and-hold position that entered the pool at price `p`: `p* sqrt(k/p) + sqrt(k p)`.
pub fn hold_value_from_entry<T: Scalar>(k: T, p: PriceRatio<T>, p_star: PriceRatio<T>) -> Result<T, AnalyticsError> {
    let k = positive(k, "k")?;
    Ok(p_star.value() * (k / p.value()).sqrt() + (k * p.value()).sqrt())
}

/// Value of the whole pool position at `p*`: `2 sqrt(k p*)`.
pub fn lp_value<T: Scalar>(k: T, p_star: PriceRatio<T>) -> Result<T, AnalyticsError> {
    let k = positive(k, "k")?;
    let two = T::one() + T::one();
    Ok(two * (k * p_star.value()).sqrt())
}

/// Relative shortfall of providing liquidity versus holding, as a magnitude in `[0, 1)`.
pub fn divergence_loss<T: Scalar>(p: PriceRatio<T>, p_star: PriceRatio<T>) -> T {
    divergence_loss_at(p_star.value() / p.value())
}

/// Divergence loss as a function of the price ratio `r = p*/p` alone.
///
/// The signed quantity `(2 sqrt(r) - r - 1) / (r + 1)` is never positive and
/// tends to -1 as `r` grows; this returns its magnitude.
pub fn divergence_loss_at<T: Scalar>(r: T) -> T {
    let one = T::one();
    let root = r.sqrt();
    // (2 sqrt(r) - r - 1) = -(sqrt(r) - 1)^2, which avoids cancellation near r = 1
    let numer = (root - one) * (root - one);
    numer / (r + one)
}
