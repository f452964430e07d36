//! Constant-product pool on ledger integers.
//!
//! Reserves live on the ledger as the pool account's balances. Swap output is
//! rounded down, so the reserve product never decreases.

use serde::{Deserialize, Serialize};

use crate::amm::analytics::{self, AnalyticsError, PriceRatio};
use crate::fixed::{Amount, ArithmeticError};
use crate::ledger::{AccountId, Ledger, LedgerError, TokenId};

/// Default fee: 0.3% of the input amount.
pub const DEFAULT_FEE: Amount = Amount::from_units(3_000_000_000_000_000);

/// Largest accepted relative mismatch between a deposit and the pool ratio.
pub const RATIO_TOLERANCE_PPM: u128 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PoolError {
    #[error("pool {0} pairs a token with itself")]
    SameToken(String),
    #[error("fee rate {0} must be below 1")]
    InvalidFee(Amount),
    #[error("{token} is not traded in pool {pool}")]
    ForeignToken { pool: String, token: TokenId },
    #[error("input amount is zero")]
    ZeroInput,
    #[error("pool {0} has no liquidity")]
    EmptyPool(String),
    #[error("trade output rounds to zero")]
    ZeroOutput,
    #[error("deposit ({amount0}, {amount1}) does not match reserve ratio ({reserve0}, {reserve1})")]
    RatioMismatch { amount0: Amount, amount1: Amount, reserve0: Amount, reserve1: Amount },
    #[error("deposit too small to mint liquidity shares")]
    ZeroShares,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl From<ArithmeticError> for PoolError {
    fn from(e: ArithmeticError) -> Self {
        PoolError::Ledger(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    id: String,
    token0: TokenId,
    token1: TokenId,
    fee_rate: Amount,
}

impl Pool {
    pub fn new(id: impl Into<String>, token0: TokenId, token1: TokenId, fee_rate: Amount) -> Result<Self, PoolError> {
        let id = id.into();
        if token0 == token1 {
            return Err(PoolError::SameToken(id));
        }
        if fee_rate >= Amount::ONE {
            return Err(PoolError::InvalidFee(fee_rate));
        }
        Ok(Pool { id, token0, token1, fee_rate })
    }

    /// Registers the LP share token with the pool as mint authority.
    pub fn register(&self, ledger: &mut Ledger) -> Result<(), LedgerError> {
        ledger.register_token(self.lp_token(), self.account())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn account(&self) -> AccountId {
        AccountId::Pool(self.id.clone())
    }

    pub fn lp_token(&self) -> TokenId {
        TokenId::Lp(self.id.clone())
    }

    pub fn tokens(&self) -> (&TokenId, &TokenId) {
        (&self.token0, &self.token1)
    }

    pub fn fee_rate(&self) -> Amount {
        self.fee_rate
    }

    pub fn contains(&self, token: &TokenId) -> bool {
        &self.token0 == token || &self.token1 == token
    }

    pub fn reserves(&self, ledger: &Ledger) -> Result<(Amount, Amount), LedgerError> {
        let me = self.account();
        Ok((ledger.balance_of(&self.token0, &me)?, ledger.balance_of(&self.token1, &me)?))
    }

    pub fn lp_supply(&self, ledger: &Ledger) -> Result<Amount, LedgerError> {
        ledger.total_supply_of(&self.lp_token())
    }

    /// Price of token0 in token1 implied by the reserves.
    pub fn spot_price(&self, ledger: &Ledger) -> Result<PriceRatio<f64>, PoolError> {
        let (r0, r1) = self.reserves(ledger)?;
        analytics::spot_price(r0.to_f64(), r1.to_f64()).map_err(|_: AnalyticsError| PoolError::EmptyPool(self.id.clone()))
    }

    /// Output for selling `amount_in` of `token_in`, without executing.
    pub fn quote_exact_in(&self, ledger: &Ledger, token_in: &TokenId, amount_in: Amount) -> Result<Amount, PoolError> {
        let (reserve_in, reserve_out) = self.oriented_reserves(ledger, token_in)?;
        if amount_in.is_zero() {
            return Err(PoolError::ZeroInput);
        }
        if reserve_in.is_zero() || reserve_out.is_zero() {
            return Err(PoolError::EmptyPool(self.id.clone()));
        }
        let effective_in = amount_in.mul_floor(Amount::ONE - self.fee_rate)?;
        let denom = reserve_in.checked_add(effective_in)?;
        // ceil keeps the product of the new reserves at or above k
        let new_out = reserve_in.mul_div_ceil(reserve_out, denom)?;
        let out = reserve_out.checked_sub(new_out)?;
        if out.is_zero() {
            return Err(PoolError::ZeroOutput);
        }
        Ok(out)
    }

    pub fn swap_exact_in(
        &self,
        ledger: &mut Ledger,
        caller: &AccountId,
        token_in: &TokenId,
        amount_in: Amount,
    ) -> Result<Amount, PoolError> {
        let out = self.quote_exact_in(ledger, token_in, amount_in)?;
        let token_out = self.other(token_in);
        let available = ledger.balance_of(token_in, caller)?;
        if available < amount_in {
            return Err(LedgerError::InsufficientBalance {
                token: token_in.clone(),
                account: caller.clone(),
                available,
                required: amount_in,
            }
            .into());
        }
        let me = self.account();
        ledger.transfer(token_in, caller, &me, amount_in)?;
        ledger.transfer(&token_out, &me, caller, out)?;
        Ok(out)
    }

    /// Deposits both tokens at the current ratio and mints LP shares.
    ///
    /// The first deposit mints `sqrt(amount0 * amount1)` shares.
    pub fn add_liquidity(
        &self,
        ledger: &mut Ledger,
        caller: &AccountId,
        amount0: Amount,
        amount1: Amount,
    ) -> Result<Amount, PoolError> {
        if amount0.is_zero() || amount1.is_zero() {
            return Err(PoolError::ZeroInput);
        }
        let (r0, r1) = self.reserves(ledger)?;
        let supply = self.lp_supply(ledger)?;
        let shares = if supply.is_zero() || r0.is_zero() || r1.is_zero() {
            amount0.geometric_mean(amount1)
        } else {
            let implied1 = amount0.mul_div_floor(r1, r0)?;
            let slack = Amount::from_units(implied1.units() / 1_000_000 * RATIO_TOLERANCE_PPM + 1);
            let diff = if implied1 > amount1 { implied1 - amount1 } else { amount1 - implied1 };
            if diff > slack {
                return Err(PoolError::RatioMismatch { amount0, amount1, reserve0: r0, reserve1: r1 });
            }
            amount0.mul_div_floor(supply, r0)?.min(amount1.mul_div_floor(supply, r1)?)
        };
        if shares.is_zero() {
            return Err(PoolError::ZeroShares);
        }
        for (token, amount) in [(&self.token0, amount0), (&self.token1, amount1)] {
            let available = ledger.balance_of(token, caller)?;
            if available < amount {
                return Err(LedgerError::InsufficientBalance {
                    token: token.clone(),
                    account: caller.clone(),
                    available,
                    required: amount,
                }
                .into());
            }
        }
        let me = self.account();
        ledger.transfer(&self.token0, caller, &me, amount0)?;
        ledger.transfer(&self.token1, caller, &me, amount1)?;
        ledger.mint(&self.lp_token(), caller, shares, &me)?;
        Ok(shares)
    }

    /// Burns LP shares for a pro-rata slice of both reserves, rounded down.
    pub fn remove_liquidity(&self, ledger: &mut Ledger, caller: &AccountId, shares: Amount) -> Result<(Amount, Amount), PoolError> {
        if shares.is_zero() {
            return Err(PoolError::ZeroInput);
        }
        let held = ledger.balance_of(&self.lp_token(), caller)?;
        if held < shares {
            return Err(LedgerError::InsufficientBalance {
                token: self.lp_token(),
                account: caller.clone(),
                available: held,
                required: shares,
            }
            .into());
        }
        let (r0, r1) = self.reserves(ledger)?;
        let supply = self.lp_supply(ledger)?;
        let out0 = shares.mul_div_floor(r0, supply)?;
        let out1 = shares.mul_div_floor(r1, supply)?;
        let me = self.account();
        ledger.burn(&self.lp_token(), caller, shares, &me)?;
        ledger.transfer(&self.token0, &me, caller, out0)?;
        ledger.transfer(&self.token1, &me, caller, out1)?;
        Ok((out0, out1))
    }

    fn other(&self, token: &TokenId) -> TokenId {
        if token == &self.token0 {
            self.token1.clone()
        } else {
            self.token0.clone()
        }
    }

    fn oriented_reserves(&self, ledger: &Ledger, token_in: &TokenId) -> Result<(Amount, Amount), PoolError> {
        let (r0, r1) = self.reserves(ledger)?;
        if token_in == &self.token0 {
            Ok((r0, r1))
        } else if token_in == &self.token1 {
            Ok((r1, r0))
        } else {
            Err(PoolError::ForeignToken { pool: self.id.clone(), token: token_in.clone() })
        }
    }
}
