//! Mock yield venues.
//!
//! A venue takes C, issues share tokens, and tracks a C-per-share exchange
//! rate. Interest is simple interest measured from a base rate, so the rate
//! after `t` elapsed steps is `base * (1 + rate_per_step * t)` no matter how
//! the elapsed time was split into calls. A loss scales the base rate.
//!
//! The venue's C balance on the ledger is its reserve. Accrual mints C into the
//! reserve and losses burn it, so reserve tracks `shares * exchange_rate` plus
//! whatever rounding dust earlier withdrawals left behind.

use serde::Serialize;

use crate::fixed::{Amount, ArithmeticError};
use crate::ledger::{AccountId, Ledger, LedgerError, TokenId, VenueId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VenueError {
    #[error("venue {0} is illiquid")]
    Illiquid(VenueId),
    #[error("venue {0} has lost all value and cannot accept deposits")]
    Worthless(VenueId),
    #[error("loss fraction {0} is outside [0, 1]")]
    LossOutOfRange(Amount),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl From<ArithmeticError> for VenueError {
    fn from(e: ArithmeticError) -> Self {
        VenueError::Ledger(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YieldVenue {
    id: VenueId,
    rate_per_step: Amount,
    base_rate: Amount,
    elapsed: u64,
    exchange_rate: Amount,
    liquid: bool,
}

impl YieldVenue {
    pub fn new(id: VenueId, rate_per_step: Amount) -> Self {
        YieldVenue {
            id,
            rate_per_step,
            base_rate: Amount::ONE,
            elapsed: 0,
            exchange_rate: Amount::ONE,
            liquid: true,
        }
    }

    /// Registers the share token with this venue as mint authority.
    pub fn register(&self, ledger: &mut Ledger) -> Result<(), LedgerError> {
        ledger.register_token(self.share_token(), self.account())
    }

    pub fn id(&self) -> VenueId {
        self.id
    }

    pub fn account(&self) -> AccountId {
        AccountId::Venue(self.id)
    }

    pub fn share_token(&self) -> TokenId {
        self.id.share_token()
    }

    pub fn exchange_rate(&self) -> Amount {
        self.exchange_rate
    }

    pub fn rate_per_step(&self) -> Amount {
        self.rate_per_step
    }

    pub fn is_liquid(&self) -> bool {
        self.liquid
    }

    /// C held by the venue.
    pub fn reserve(&self, ledger: &Ledger) -> Result<Amount, LedgerError> {
        ledger.balance_of(&TokenId::C, &self.account())
    }

    pub fn outstanding_shares(&self, ledger: &Ledger) -> Result<Amount, LedgerError> {
        ledger.total_supply_of(&self.share_token())
    }

    /// C that all outstanding shares would redeem for in one withdrawal.
    pub fn redeemable_value(&self, ledger: &Ledger) -> Result<Amount, VenueError> {
        Ok(self.outstanding_shares(ledger)?.mul_floor(self.exchange_rate)?)
    }

    /// Converts C into shares at the current rate, rounding shares down.
    pub fn deposit(&self, ledger: &mut Ledger, caller: &AccountId, c_amount: Amount) -> Result<Amount, VenueError> {
        if !self.liquid {
            return Err(VenueError::Illiquid(self.id));
        }
        if self.exchange_rate.is_zero() {
            return Err(VenueError::Worthless(self.id));
        }
        let shares = c_amount.div_floor(self.exchange_rate)?;
        ledger.transfer(&TokenId::C, caller, &self.account(), c_amount)?;
        ledger.mint(&self.share_token(), caller, shares, &self.account())?;
        Ok(shares)
    }

    /// Burns shares and pays out `shares * exchange_rate` C, rounded down.
    pub fn withdraw(&self, ledger: &mut Ledger, caller: &AccountId, share_amount: Amount) -> Result<Amount, VenueError> {
        if !self.liquid {
            return Err(VenueError::Illiquid(self.id));
        }
        let c_amount = share_amount.mul_floor(self.exchange_rate)?;
        let held = ledger.balance_of(&self.share_token(), caller)?;
        if held < share_amount {
            return Err(LedgerError::InsufficientBalance {
                token: self.share_token(),
                account: caller.clone(),
                available: held,
                required: share_amount,
            }
            .into());
        }
        let reserve = self.reserve(ledger)?;
        if reserve < c_amount {
            return Err(LedgerError::InsufficientBalance {
                token: TokenId::C,
                account: self.account(),
                available: reserve,
                required: c_amount,
            }
            .into());
        }
        ledger.burn(&self.share_token(), caller, share_amount, &self.account())?;
        ledger.transfer(&TokenId::C, &self.account(), caller, c_amount)?;
        Ok(c_amount)
    }

    /// Advances the venue clock by `dt` steps. Returns the C minted into the reserve.
    pub fn accrue(&mut self, ledger: &mut Ledger, dt: u64) -> Result<Amount, VenueError> {
        if dt == 0 {
            return Ok(Amount::ZERO);
        }
        let elapsed = self.elapsed.checked_add(dt).ok_or(ArithmeticError::Overflow)?;
        let new_rate = self.rate_at(self.base_rate, elapsed)?;
        let (minted, burned) = self.rescale_reserve(ledger, new_rate)?;
        debug_assert!(burned.is_zero());
        self.elapsed = elapsed;
        self.exchange_rate = new_rate;
        Ok(minted)
    }

    /// Writes off `fraction` of the venue's value. Returns the C burned from the reserve.
    pub fn apply_loss(&mut self, ledger: &mut Ledger, fraction: Amount) -> Result<Amount, VenueError> {
        if fraction > Amount::ONE {
            return Err(VenueError::LossOutOfRange(fraction));
        }
        let base = self.base_rate.mul_floor(Amount::ONE - fraction)?;
        let new_rate = self.rate_at(base, self.elapsed)?;
        let (minted, burned) = self.rescale_reserve(ledger, new_rate)?;
        debug_assert!(minted.is_zero());
        self.base_rate = base;
        self.exchange_rate = new_rate;
        Ok(burned)
    }

    pub fn set_liquidity(&mut self, liquid: bool) {
        self.liquid = liquid;
    }

    fn rate_at(&self, base: Amount, elapsed: u64) -> Result<Amount, ArithmeticError> {
        let growth = self
            .rate_per_step
            .units()
            .checked_mul(elapsed as u128)
            .ok_or(ArithmeticError::Overflow)?;
        let factor = Amount::ONE.checked_add(Amount::from_units(growth))?;
        base.mul_floor(factor)
    }

    /// Moves the reserve to `floor(shares * new_rate)` plus the existing dust.
    fn rescale_reserve(&self, ledger: &mut Ledger, new_rate: Amount) -> Result<(Amount, Amount), VenueError> {
        let shares = self.outstanding_shares(ledger)?;
        let reserve = self.reserve(ledger)?;
        let old_value = shares.mul_floor(self.exchange_rate)?;
        let new_value = shares.mul_floor(new_rate)?;
        let dust = reserve.checked_sub(old_value)?;
        let target = new_value.checked_add(dust)?;
        let account = self.account();
        if target >= reserve {
            let minted = target - reserve;
            ledger.mint(&TokenId::C, &account, minted, &AccountId::Genesis)?;
            Ok((minted, Amount::ZERO))
        } else {
            let burned = reserve - target;
            ledger.burn(&TokenId::C, &account, burned, &AccountId::Genesis)?;
            Ok((Amount::ZERO, burned))
        }
    }
}

/// The two venues a policy splits its capital across.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VenuePair {
    pub x: YieldVenue,
    pub y: YieldVenue,
}

impl VenuePair {
    pub fn new(x_rate_per_step: Amount, y_rate_per_step: Amount) -> Self {
        VenuePair {
            x: YieldVenue::new(VenueId::X, x_rate_per_step),
            y: YieldVenue::new(VenueId::Y, y_rate_per_step),
        }
    }

    pub fn register(&self, ledger: &mut Ledger) -> Result<(), LedgerError> {
        self.x.register(ledger)?;
        self.y.register(ledger)
    }

    pub fn get(&self, id: VenueId) -> &YieldVenue {
        match id {
            VenueId::X => &self.x,
            VenueId::Y => &self.y,
        }
    }

    pub fn get_mut(&mut self, id: VenueId) -> &mut YieldVenue {
        match id {
            VenueId::X => &mut self.x,
            VenueId::Y => &mut self.y,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &YieldVenue> {
        [&self.x, &self.y].into_iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    fn setup(rate_per_step: &str) -> (Ledger, YieldVenue, AccountId) {
        let mut l = Ledger::new();
        l.register_token(TokenId::C, AccountId::Genesis).unwrap();
        let v = YieldVenue::new(VenueId::X, amt(rate_per_step));
        v.register(&mut l).unwrap();
        let who = AccountId::Insurance;
        l.mint(&TokenId::C, &who, Amount::whole(1000), &AccountId::Genesis).unwrap();
        (l, v, who)
    }

    fn check_value_invariant(l: &Ledger, v: &YieldVenue) {
        let reserve = v.reserve(l).unwrap();
        let value = v.redeemable_value(l).unwrap();
        assert!(reserve >= value, "reserve {reserve} below redeemable {value}");
    }

    #[test]
    fn deposit_at_unit_and_higher_rate() {
        let (mut l, mut v, who) = setup("0");
        assert_eq!(v.deposit(&mut l, &who, Amount::whole(50)).unwrap(), Amount::whole(50));
        v.exchange_rate = amt("1.25");
        assert_eq!(v.deposit(&mut l, &who, Amount::whole(50)).unwrap(), Amount::whole(40));
    }

    #[test]
    fn illiquid_venue_rejects_both_directions() {
        let (mut l, mut v, who) = setup("0");
        v.deposit(&mut l, &who, Amount::whole(50)).unwrap();
        v.set_liquidity(false);
        let snap = l.clone();
        assert_eq!(v.deposit(&mut l, &who, Amount::whole(1)), Err(VenueError::Illiquid(VenueId::X)));
        assert_eq!(v.withdraw(&mut l, &who, Amount::whole(1)), Err(VenueError::Illiquid(VenueId::X)));
        assert_eq!(l, snap);
        v.set_liquidity(true);
        assert_eq!(v.exchange_rate(), Amount::ONE);
        assert_eq!(v.withdraw(&mut l, &who, Amount::whole(50)).unwrap(), Amount::whole(50));
    }

    #[test]
    fn withdraw_with_interest() {
        // 5% over 100 steps
        let (mut l, mut v, who) = setup("0.0005");
        v.deposit(&mut l, &who, Amount::whole(50)).unwrap();
        let minted = v.accrue(&mut l, 100).unwrap();
        assert_eq!(v.exchange_rate(), amt("1.05"));
        assert_eq!(minted, amt("2.5"));
        assert_eq!(v.withdraw(&mut l, &who, Amount::whole(50)).unwrap(), amt("52.5"));
        assert_eq!(v.reserve(&l).unwrap(), Amount::ZERO);
    }

    #[test]
    fn withdraw_more_than_held_fails_cleanly() {
        let (mut l, v, who) = setup("0");
        v.deposit(&mut l, &who, Amount::whole(10)).unwrap();
        let snap = l.clone();
        assert!(v.withdraw(&mut l, &who, Amount::whole(11)).is_err());
        assert_eq!(l, snap);
    }

    #[test]
    fn round_trip_without_interest() {
        let (mut l, v, who) = setup("0");
        let shares = v.deposit(&mut l, &who, amt("123.456")).unwrap();
        assert_eq!(v.withdraw(&mut l, &who, shares).unwrap(), amt("123.456"));
    }

    #[test]
    fn zero_rate_and_zero_dt_change_nothing() {
        let (mut l, mut v, who) = setup("0");
        v.deposit(&mut l, &who, Amount::whole(10)).unwrap();
        v.accrue(&mut l, 1_000).unwrap();
        assert_eq!(v.exchange_rate(), Amount::ONE);
        let (mut l, mut v, _) = setup("0.01");
        let snap = (l.clone(), v.clone());
        v.accrue(&mut l, 0).unwrap();
        assert_eq!((l, v), snap);
    }

    #[test]
    fn losses_scale_the_rate() {
        let (mut l, mut v, who) = setup("0");
        v.deposit(&mut l, &who, Amount::whole(100)).unwrap();
        v.apply_loss(&mut l, Amount::ZERO).unwrap();
        assert_eq!(v.exchange_rate(), Amount::ONE);
        assert_eq!(v.apply_loss(&mut l, amt("0.4")).unwrap(), Amount::whole(40));
        assert_eq!(v.exchange_rate(), amt("0.6"));
        v.apply_loss(&mut l, Amount::ONE).unwrap();
        assert_eq!(v.exchange_rate(), Amount::ZERO);
        assert_eq!(v.withdraw(&mut l, &who, Amount::whole(100)).unwrap(), Amount::ZERO);
        assert_eq!(v.deposit(&mut l, &who, Amount::ONE), Err(VenueError::Worthless(VenueId::X)));
        assert_eq!(v.apply_loss(&mut l, amt("1.1")), Err(VenueError::LossOutOfRange(amt("1.1"))));
    }

    #[test]
    fn split_accrual_matches_single_accrual() {
        let (mut l1, mut v1, who) = setup("0.000333");
        v1.deposit(&mut l1, &who, amt("77.7")).unwrap();
        let (mut l2, mut v2) = (l1.clone(), v1.clone());
        v1.accrue(&mut l1, 37).unwrap();
        v1.accrue(&mut l1, 63).unwrap();
        v2.accrue(&mut l2, 100).unwrap();
        assert_eq!((l1, v1), (l2, v2));
    }

    proptest! {
        #[test]
        fn accrue_and_loss_commute(
            rate in 0u64..10_000_000_000_000_000,
            dt in 0u64..1000,
            frac in 0u64..=1_000_000_000_000_000_000,
            dep in 1u64..u64::MAX,
        ) {
            let (mut l1, mut v1, who) = setup("0");
            v1.rate_per_step = Amount::from_units(rate as u128);
            l1.mint(&TokenId::C, &who, Amount::from_units(dep as u128), &AccountId::Genesis).unwrap();
            v1.deposit(&mut l1, &who, Amount::from_units(dep as u128)).unwrap();
            let (mut l2, mut v2) = (l1.clone(), v1.clone());
            let f = Amount::from_units(frac as u128);
            v1.accrue(&mut l1, dt).unwrap();
            v1.apply_loss(&mut l1, f).unwrap();
            v2.apply_loss(&mut l2, f).unwrap();
            v2.accrue(&mut l2, dt).unwrap();
            prop_assert_eq!(&v1, &v2);
            prop_assert_eq!(&l1, &l2);
        }

        #[test]
        fn reserve_covers_outstanding_shares(
            ops in proptest::collection::vec((0u8..4, 1u128..1_000_000_000_000_000_000_000), 1..40),
            rate in 0u64..1_000_000_000_000_000,
        ) {
            let (mut l, mut v, who) = setup("0");
            v.rate_per_step = Amount::from_units(rate as u128);
            l.mint(&TokenId::C, &who, Amount::whole(1_000_000), &AccountId::Genesis).unwrap();
            for (kind, x) in ops {
                let x = Amount::from_units(x);
                match kind {
                    0 => { let _ = v.deposit(&mut l, &who, x); }
                    1 => {
                        let held = l.balance_of(&TokenId::Cx, &who).unwrap();
                        let _ = v.withdraw(&mut l, &who, x.min(held));
                    }
                    2 => { v.accrue(&mut l, x.units() as u64 % 50).unwrap(); }
                    _ => { v.apply_loss(&mut l, Amount::from_units(x.units() % (Amount::ONE.units() / 2))).unwrap(); }
                }
                check_value_invariant(&l, &v);
                prop_assert!(l.check_conservation().is_ok());
                // at most a couple of units of dust per operation
                let dust = v.reserve(&l).unwrap() - v.redeemable_value(&l).unwrap();
                prop_assert!(dust.units() <= 2 * 40);
            }
        }
    }
}
