//! Divergence loss measured by actually running the integer pool.
//!
//! A lone provider seeds a fresh pool at price `p`, an arbitrageur trades it
//! to `p*` without fees, and the provider withdraws everything. The loss is
//! read off the ledger balances, independent of the closed form.

use serde::Serialize;

use crate::amm::analytics::PriceRatio;
use crate::amm::pool::{Pool, PoolError};
use crate::fixed::Amount;
use crate::ledger::{AccountId, Ledger, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceOutcome {
    /// `p*/p` as realized by the integer reserves.
    pub realized_ratio: f64,
    pub hold_value: f64,
    pub lp_value: f64,
    /// `(hold - lp) / hold`.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("k and prices must be positive and representable")]
    OutOfRange,
    #[error(transparent)]
    Pool(#[from] PoolError),
}

/// Seeds a pool with `(sqrt(k/p), sqrt(k p))` whole tokens, arbitrages it to `p*`, and withdraws.
pub fn simulate_divergence(k: f64, p: PriceRatio<f64>, p_star: PriceRatio<f64>) -> Result<DivergenceOutcome, SimulationError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(SimulationError::OutOfRange);
    }
    let provider = AccountId::agent("provider");
    let arbitrageur = AccountId::agent("arbitrageur");
    let mut ledger = Ledger::new();
    for token in [TokenId::A, TokenId::C] {
        ledger.register_token(token, AccountId::Genesis).map_err(PoolError::from)?;
    }
    let pool = Pool::new("oracle", TokenId::A, TokenId::C, Amount::ZERO)?;
    pool.register(&mut ledger).map_err(PoolError::from)?;

    let seed0 = Amount::from_f64((k / p.value()).sqrt()).ok_or(SimulationError::OutOfRange)?;
    let seed1 = Amount::from_f64((k * p.value()).sqrt()).ok_or(SimulationError::OutOfRange)?;
    for (token, amount) in [(TokenId::A, seed0), (TokenId::C, seed1)] {
        ledger.mint(&token, &provider, amount, &AccountId::Genesis).map_err(PoolError::from)?;
    }
    let shares = pool.add_liquidity(&mut ledger, &provider, seed0, seed1)?;
    let entry = seed1.to_f64() / seed0.to_f64();

    let k_units = seed0.to_f64() * seed1.to_f64();
    let (target0, target1) = ((k_units / p_star.value()).sqrt(), (k_units * p_star.value()).sqrt());
    let (token_in, amount_in) = if p_star.value() > entry {
        (TokenId::C, Amount::from_f64(target1 - seed1.to_f64()))
    } else {
        (TokenId::A, Amount::from_f64(target0 - seed0.to_f64()))
    };
    let amount_in = amount_in.ok_or(SimulationError::OutOfRange)?;
    if !amount_in.is_zero() {
        ledger.mint(&token_in, &arbitrageur, amount_in, &AccountId::Genesis).map_err(PoolError::from)?;
        pool.swap_exact_in(&mut ledger, &arbitrageur, &token_in, amount_in)?;
    }

    let (out0, out1) = pool.remove_liquidity(&mut ledger, &provider, shares)?;
    let exit = out1.to_f64() / out0.to_f64();
    // exact integer deltas keep the cancellation in hold - lp small
    let d0 = seed0.units() as i128 - out0.units() as i128;
    let d1 = seed1.units() as i128 - out1.units() as i128;
    let unit = crate::fixed::SCALE as f64;
    let shortfall = (exit * d0 as f64 + d1 as f64) / unit;
    let hold_value = exit * seed0.to_f64() + seed1.to_f64();
    Ok(DivergenceOutcome {
        realized_ratio: exit / entry,
        hold_value,
        lp_value: hold_value - shortfall,
        loss: shortfall / hold_value,
    })
}
