//! Unsigned 18-decimal fixed-point quantities.
//!
//! Every token balance, exchange rate, payout ratio and fee in the simulator is
//! an [`Amount`]: an integer count of `10^-18` units. Products and quotients go
//! through a 256-bit intermediate and round toward zero, the same way an EVM
//! contract would compute them.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use ethnum::U256;
use num_traits::{Bounded, CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of fractional decimal digits.
pub const DECIMALS: u32 = 18;

/// `10^18`, the raw value of one whole token.
pub const SCALE: u128 = 1_000_000_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ArithmeticError {
    #[error("arithmetic overflow")]
    Overflow,
    #[error("arithmetic underflow")]
    Underflow,
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseAmountError {
    #[error("empty amount")]
    Empty,
    #[error("amounts cannot be negative: {0:?}")]
    Negative(String),
    #[error("invalid decimal amount: {0:?}")]
    Invalid(String),
    #[error("more than 18 fractional digits: {0:?}")]
    TooPrecise(String),
    #[error("amount too large: {0:?}")]
    TooLarge(String),
}

/// Non-negative fixed-point number with 18 fractional digits.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(u128);

impl Amount {
    pub const ZERO: Amount = Amount(0);
    pub const ONE: Amount = Amount(SCALE);
    pub const MAX: Amount = Amount(u128::MAX);

    /// Builds an amount from raw `10^-18` units.
    pub const fn from_units(units: u128) -> Self {
        Amount(units)
    }

    /// Raw `10^-18` units.
    pub const fn units(self) -> u128 {
        self.0
    }

    /// `n` whole tokens. Panics on overflow, so meant for constants and tests.
    pub const fn whole(n: u128) -> Self {
        match n.checked_mul(SCALE) {
            Some(v) => Amount(v),
            None => panic!("Amount::whole overflow"),
        }
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Amount) -> Result<Amount, ArithmeticError> {
        self.0.checked_add(rhs.0).map(Amount).ok_or(ArithmeticError::Overflow)
    }

    pub fn checked_sub(self, rhs: Amount) -> Result<Amount, ArithmeticError> {
        self.0.checked_sub(rhs.0).map(Amount).ok_or(ArithmeticError::Underflow)
    }

    /// `self - rhs`, or zero when `rhs > self`.
    pub fn saturating_sub(self, rhs: Amount) -> Amount {
        Amount(self.0.saturating_sub(rhs.0))
    }

    /// Fixed-point product, rounded down.
    pub fn mul_floor(self, rhs: Amount) -> Result<Amount, ArithmeticError> {
        mul_div_floor(self.0, rhs.0, SCALE).map(Amount)
    }

    /// Fixed-point product, rounded up.
    pub fn mul_ceil(self, rhs: Amount) -> Result<Amount, ArithmeticError> {
        mul_div_ceil(self.0, rhs.0, SCALE).map(Amount)
    }

    /// Fixed-point quotient, rounded down.
    pub fn div_floor(self, rhs: Amount) -> Result<Amount, ArithmeticError> {
        mul_div_floor(self.0, SCALE, rhs.0).map(Amount)
    }

    /// `floor(self * num / den)` on raw units.
    pub fn mul_div_floor(self, num: Amount, den: Amount) -> Result<Amount, ArithmeticError> {
        mul_div_floor(self.0, num.0, den.0).map(Amount)
    }

    /// `ceil(self * num / den)` on raw units.
    pub fn mul_div_ceil(self, num: Amount, den: Amount) -> Result<Amount, ArithmeticError> {
        mul_div_ceil(self.0, num.0, den.0).map(Amount)
    }

    /// Halves the raw value; `None` if it is odd.
    pub fn checked_half(self) -> Option<Amount> {
        self.0.is_multiple_of(2).then_some(Amount(self.0 / 2))
    }

    /// `floor(sqrt(self.units * rhs.units))` as raw units, i.e. the geometric mean.
    pub fn geometric_mean(self, rhs: Amount) -> Amount {
        let product = U256::from(self.0) * U256::from(rhs.0);
        Amount(isqrt(product).as_u128())
    }

    /// Lossy conversion to whole tokens as `f64`.
    pub fn to_f64(self) -> f64 {
        let whole = (self.0 / SCALE) as f64;
        let frac = (self.0 % SCALE) as f64 / SCALE as f64;
        whole + frac
    }

    /// Nearest amount to a non-negative, finite `f64` token count.
    pub fn from_f64(x: f64) -> Option<Amount> {
        if !x.is_finite() || x < 0.0 {
            return None;
        }
        let units = (x * SCALE as f64).round();
        if units >= u128::MAX as f64 {
            return None;
        }
        Some(Amount(units as u128))
    }
}

fn mul_div_floor(a: u128, b: u128, c: u128) -> Result<u128, ArithmeticError> {
    if c == 0 {
        return Err(ArithmeticError::DivisionByZero);
    }
    let q = U256::from(a) * U256::from(b) / U256::from(c);
    u128::try_from(q).map_err(|_| ArithmeticError::Overflow)
}

fn mul_div_ceil(a: u128, b: u128, c: u128) -> Result<u128, ArithmeticError> {
    if c == 0 {
        return Err(ArithmeticError::DivisionByZero);
    }
    let p = U256::from(a) * U256::from(b);
    let c = U256::from(c);
    let mut q = p / c;
    if p % c != U256::ZERO {
        q += U256::ONE;
    }
    u128::try_from(q).map_err(|_| ArithmeticError::Overflow)
}

fn isqrt(n: U256) -> U256 {
    if n < U256::from(2u8) {
        return n;
    }
    // Newton iteration from an over-estimate converges monotonically downward.
    let bits = 256 - n.leading_zeros();
    let mut x = U256::ONE << bits.div_ceil(2);
    loop {
        let y = (x + n / x) >> 1;
        if y >= x {
            return x;
        }
        x = y;
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / SCALE;
        let frac = self.0 % SCALE;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let digits = format!("{frac:018}");
            write!(f, "{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Amount({self})")
    }
}

impl FromStr for Amount {
    type Err = ParseAmountError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseAmountError::Empty);
        }
        if s.starts_with('-') {
            return Err(ParseAmountError::Negative(s.to_owned()));
        }
        let body = s.strip_prefix('+').unwrap_or(s);
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if (int_part.is_empty() && frac_part.is_empty()) || !all_digits(int_part) || !all_digits(frac_part) {
            return Err(ParseAmountError::Invalid(s.to_owned()));
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > DECIMALS as usize {
            return Err(ParseAmountError::TooPrecise(s.to_owned()));
        }
        let too_large = || ParseAmountError::TooLarge(s.to_owned());
        let whole: u128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| too_large())?
        };
        let frac: u128 = if frac_trimmed.is_empty() {
            0
        } else {
            let padded = format!("{frac_trimmed:0<18}");
            padded.parse().map_err(|_| ParseAmountError::Invalid(s.to_owned()))?
        };
        whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac))
            .map(Amount)
            .ok_or_else(too_large)
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// Operator impls panic on overflow like the primitive integers; ledger code
// uses the checked forms.

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        self.checked_add(rhs).expect("Amount addition overflow")
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        self.checked_sub(rhs).expect("Amount subtraction underflow")
    }
}

impl Mul for Amount {
    type Output = Amount;
    fn mul(self, rhs: Amount) -> Amount {
        self.mul_floor(rhs).expect("Amount multiplication overflow")
    }
}

impl Div for Amount {
    type Output = Amount;
    fn div(self, rhs: Amount) -> Amount {
        self.div_floor(rhs).expect("Amount division failed")
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, Add::add)
    }
}

impl Zero for Amount {
    fn zero() -> Self {
        Amount::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl One for Amount {
    fn one() -> Self {
        Amount::ONE
    }
}

impl Bounded for Amount {
    fn min_value() -> Self {
        Amount::ZERO
    }
    fn max_value() -> Self {
        Amount::MAX
    }
}

impl CheckedAdd for Amount {
    fn checked_add(&self, v: &Self) -> Option<Self> {
        Amount::checked_add(*self, *v).ok()
    }
}

impl CheckedSub for Amount {
    fn checked_sub(&self, v: &Self) -> Option<Self> {
        Amount::checked_sub(*self, *v).ok()
    }
}

impl CheckedMul for Amount {
    fn checked_mul(&self, v: &Self) -> Option<Self> {
        self.mul_floor(*v).ok()
    }
}

impl CheckedDiv for Amount {
    fn checked_div(&self, v: &Self) -> Option<Self> {
        self.div_floor(*v).ok()
    }
}

impl ToPrimitive for Amount {
    fn to_i64(&self) -> Option<i64> {
        i64::try_from(self.0 / SCALE).ok()
    }
    fn to_u64(&self) -> Option<u64> {
        u64::try_from(self.0 / SCALE).ok()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(Amount::to_f64(*self))
    }
}
