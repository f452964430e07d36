//! The tranche insurance contract.
//!
//! One [`Policy`] covers one period. Holders of C call `split_risk` before the
//! start time and receive equal amounts of the senior tranche A and the junior
//! tranche B. The pooled C is split across two yield venues, pulled back at
//! `t1`, and paid out either in C (liquid mode) or, if the pull-back never
//! succeeds, in venue shares with A redeeming first (fallback mode).
//!
//! The state is never stored. It is recomputed from the clock and two flags on
//! every call, and any call outside its state's function set is rejected.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fixed::{Amount, ArithmeticError};
use crate::ledger::{AccountId, Ledger, LedgerError, TokenId, VenueId};
use crate::venues::{VenueError, VenuePair};

/// Timestamps that drive the forced state transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    /// Deployment time; the simulation clock starts here.
    pub deploy: u64,
    /// End of minting; `invest` opens.
    pub start: u64,
    /// End of cover; `divest` opens.
    pub t1: u64,
    /// Fallback mode starts if nothing was divested.
    pub t2: u64,
    /// B-tranches become redeemable in fallback mode.
    pub t3: u64,
}

impl PeriodConfig {
    pub fn new(deploy: u64, start: u64, t1: u64, t2: u64, t3: u64) -> Result<Self, InsuranceError> {
        let p = PeriodConfig { deploy, start, t1, t2, t3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), InsuranceError> {
        if !(self.deploy <= self.start && self.start < self.t1 && self.t1 < self.t2 && self.t2 < self.t3) {
            return Err(InsuranceError::InvalidPeriod(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyState {
    ReadyToAccept,
    ReadyToInvest,
    MainCoverActive,
    ReadyToDivest,
    Liquid,
    FallbackOnlyA,
    FallbackAll,
}

impl PolicyState {
    pub const ALL: [PolicyState; 7] = [
        PolicyState::ReadyToAccept,
        PolicyState::ReadyToInvest,
        PolicyState::MainCoverActive,
        PolicyState::ReadyToDivest,
        PolicyState::Liquid,
        PolicyState::FallbackOnlyA,
        PolicyState::FallbackAll,
    ];

    /// Whether `op` is in this state's function set.
    pub fn allows(self, op: PolicyOp) -> bool {
        use PolicyOp::*;
        use PolicyState::*;
        matches!(
            (self, op),
            (ReadyToAccept, SplitRisk)
                | (ReadyToInvest, Invest)
                | (ReadyToDivest, Divest)
                | (Liquid, Claim | ClaimAll)
                | (FallbackOnlyA, ClaimA)
                | (FallbackAll, ClaimA | ClaimB)
        )
    }
}

impl fmt::Display for PolicyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The contract's callable functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyOp {
    SplitRisk,
    Invest,
    Divest,
    Claim,
    ClaimAll,
    ClaimA,
    ClaimB,
}

impl PolicyOp {
    pub const ALL: [PolicyOp; 7] = [
        PolicyOp::SplitRisk,
        PolicyOp::Invest,
        PolicyOp::Divest,
        PolicyOp::Claim,
        PolicyOp::ClaimAll,
        PolicyOp::ClaimA,
        PolicyOp::ClaimB,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InsuranceError {
    #[error("{op:?} is not callable in state {state}")]
    WrongState { op: PolicyOp, state: PolicyState },
    #[error("period timestamps must satisfy deploy <= start < t1 < t2 < t3, got {0:?}")]
    InvalidPeriod(PeriodConfig),
    #[error("split amount {0} is not an even number of units")]
    OddAmount(Amount),
    #[error("interest {interest} exceeds redeemed amount in the partial-loss case")]
    InvalidInterest { interest: Amount },
    #[error("A and B supplies differ: {a} vs {b}")]
    UnequalTranches { a: Amount, b: Amount },
    #[error("{redeemed} C redeemed but no tranches outstanding")]
    NoTranches { redeemed: Amount },
    #[error("contract holds {available} {token}, payout needs {required}")]
    InsufficientHoldings { token: TokenId, available: Amount, required: Amount },
    #[error(transparent)]
    Venue(#[from] VenueError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl From<ArithmeticError> for InsuranceError {
    fn from(e: ArithmeticError) -> Self {
        InsuranceError::Ledger(e.into())
    }
}

/// Which row of the liquid-mode payout table applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayoutCase {
    /// Redeemed at least what was invested; split equally.
    Equal,
    /// Lost less than half; A gets principal plus interest, B the rest.
    SeniorProtected,
    /// Lost half or more; everything goes to A.
    SeniorImpaired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidPayouts {
    pub case: PayoutCase,
    pub a_total: Amount,
    pub b_total: Amount,
    /// C per A token.
    pub per_a: Amount,
    /// C per B token.
    pub per_b: Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackRatios {
    /// Cx per tranche token.
    pub cx_payout: Amount,
    /// Cy per tranche token.
    pub cy_payout: Amount,
}

/// Interest as the sum of each venue's gain over its half of the investment.
///
/// With two venues this makes the B total in the partial-loss case exactly the
/// losing venue's recovery.
pub fn interest_earned(c_invested: Amount, redeemed: &[Amount]) -> Amount {
    let half = Amount::from_units(c_invested.units() / 2);
    redeemed.iter().map(|r| r.saturating_sub(half)).sum()
}

/// Splits `c_redeemed` between the tranche classes and divides per token, rounding down.
pub fn compute_liquid_payouts(
    c_invested: Amount,
    c_redeemed: Amount,
    interest: Amount,
    num_a: Amount,
    num_b: Amount,
) -> Result<LiquidPayouts, InsuranceError> {
    if num_a != num_b {
        return Err(InsuranceError::UnequalTranches { a: num_a, b: num_b });
    }
    let half_invested = Amount::from_units(c_invested.units() / 2);
    let (case, a_total, b_total) = if c_redeemed >= c_invested {
        let half = Amount::from_units(c_redeemed.units() / 2);
        (PayoutCase::Equal, half, half)
    } else if c_redeemed > half_invested {
        let a_total = half_invested.checked_add(interest)?;
        let b_total = c_redeemed
            .checked_sub(a_total)
            .map_err(|_| InsuranceError::InvalidInterest { interest })?;
        (PayoutCase::SeniorProtected, a_total, b_total)
    } else {
        (PayoutCase::SeniorImpaired, c_redeemed, Amount::ZERO)
    };
    if num_a.is_zero() {
        if !c_redeemed.is_zero() {
            return Err(InsuranceError::NoTranches { redeemed: c_redeemed });
        }
        return Ok(LiquidPayouts { case, a_total, b_total, per_a: Amount::ZERO, per_b: Amount::ZERO });
    }
    Ok(LiquidPayouts {
        case,
        a_total,
        b_total,
        per_a: a_total.div_floor(num_a)?,
        per_b: b_total.div_floor(num_b)?,
    })
}

/// Fixed redeem ratios: each asset held, divided by half the tranche supply.
pub fn compute_fallback_ratios(
    total_tranches: Amount,
    cx_held: Amount,
    cy_held: Amount,
) -> Result<FallbackRatios, InsuranceError> {
    let half = Amount::from_units(total_tranches.units() / 2);
    if half.is_zero() {
        return Err(InsuranceError::NoTranches { redeemed: cx_held.max(cy_held) });
    }
    Ok(FallbackRatios {
        cx_payout: cx_held.div_floor(half)?,
        cy_payout: cy_held.div_floor(half)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Policy {
    period: PeriodConfig,
    is_invested: bool,
    in_liquid_mode: bool,
    /// A minted so far; B minted is always the same.
    tranches_issued: Amount,
    c_invested: Amount,
    c_redeemed: Amount,
    redeemed_x: Amount,
    redeemed_y: Amount,
    interest: Amount,
    liquid_payouts: Option<LiquidPayouts>,
    fallback_ratios: Option<FallbackRatios>,
}

impl Policy {
    pub fn new(period: PeriodConfig) -> Result<Self, InsuranceError> {
        period.validate()?;
        Ok(Policy {
            period,
            is_invested: false,
            in_liquid_mode: false,
            tranches_issued: Amount::ZERO,
            c_invested: Amount::ZERO,
            c_redeemed: Amount::ZERO,
            redeemed_x: Amount::ZERO,
            redeemed_y: Amount::ZERO,
            interest: Amount::ZERO,
            liquid_payouts: None,
            fallback_ratios: None,
        })
    }

    /// Registers A and B with the contract as their only mint authority.
    pub fn register_tokens(&self, ledger: &mut Ledger) -> Result<(), LedgerError> {
        ledger.register_token(TokenId::A, AccountId::Insurance)?;
        ledger.register_token(TokenId::B, AccountId::Insurance)
    }

    pub fn account(&self) -> AccountId {
        AccountId::Insurance
    }

    pub fn period(&self) -> &PeriodConfig {
        &self.period
    }

    pub fn is_invested(&self) -> bool {
        self.is_invested
    }

    pub fn in_liquid_mode(&self) -> bool {
        self.in_liquid_mode
    }

    pub fn tranches_issued(&self) -> Amount {
        self.tranches_issued
    }

    pub fn c_invested(&self) -> Amount {
        self.c_invested
    }

    pub fn c_redeemed(&self) -> Amount {
        self.c_redeemed
    }

    pub fn redeemed_from(&self, venue: VenueId) -> Amount {
        match venue {
            VenueId::X => self.redeemed_x,
            VenueId::Y => self.redeemed_y,
        }
    }

    pub fn interest(&self) -> Amount {
        self.interest
    }

    pub fn liquid_payouts(&self) -> Option<&LiquidPayouts> {
        self.liquid_payouts.as_ref()
    }

    pub fn fallback_ratios(&self) -> Option<&FallbackRatios> {
        self.fallback_ratios.as_ref()
    }

    pub fn current_state(&self, clock: u64) -> PolicyState {
        let p = &self.period;
        if self.in_liquid_mode {
            return PolicyState::Liquid;
        }
        if !self.is_invested {
            return if clock < p.start {
                PolicyState::ReadyToAccept
            } else if clock < p.t1 {
                PolicyState::ReadyToInvest
            } else {
                PolicyState::Liquid
            };
        }
        if clock < p.t1 {
            PolicyState::MainCoverActive
        } else if clock < p.t2 {
            PolicyState::ReadyToDivest
        } else if clock < p.t3 {
            PolicyState::FallbackOnlyA
        } else {
            PolicyState::FallbackAll
        }
    }

    fn require(&self, op: PolicyOp, clock: u64) -> Result<PolicyState, InsuranceError> {
        let state = self.current_state(clock);
        if state.allows(op) {
            Ok(state)
        } else {
            Err(InsuranceError::WrongState { op, state })
        }
    }

    /// Fixes the payout schedule for the redemption state reached at `clock`.
    ///
    /// In the refund path this sets per-token payouts from the C still held.
    /// In fallback mode it freezes the redeem ratios from current holdings.
    /// Idempotent; a no-op in every other state.
    pub fn settle(&mut self, ledger: &Ledger, clock: u64) -> Result<(), InsuranceError> {
        match self.current_state(clock) {
            PolicyState::Liquid if self.liquid_payouts.is_none() => {
                let held = ledger.balance_of(&TokenId::C, &self.account())?;
                let n = self.tranches_issued;
                self.liquid_payouts = Some(compute_liquid_payouts(held, held, Amount::ZERO, n, n)?);
            }
            PolicyState::FallbackOnlyA | PolicyState::FallbackAll if self.fallback_ratios.is_none() => {
                let a = ledger.total_supply_of(&TokenId::A)?;
                let b = ledger.total_supply_of(&TokenId::B)?;
                let total = a.checked_add(b)?;
                let cx = ledger.balance_of(&TokenId::Cx, &self.account())?;
                let cy = ledger.balance_of(&TokenId::Cy, &self.account())?;
                self.fallback_ratios = Some(if total.is_zero() {
                    FallbackRatios { cx_payout: Amount::ZERO, cy_payout: Amount::ZERO }
                } else {
                    compute_fallback_ratios(total, cx, cy)?
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Takes `c_amount` C from `caller` and mints half that amount of each tranche.
    pub fn split_risk(
        &mut self,
        ledger: &mut Ledger,
        clock: u64,
        caller: &AccountId,
        c_amount: Amount,
    ) -> Result<(Amount, Amount), InsuranceError> {
        self.require(PolicyOp::SplitRisk, clock)?;
        let half = c_amount.checked_half().ok_or(InsuranceError::OddAmount(c_amount))?;
        let issued = self.tranches_issued.checked_add(half)?;
        let me = self.account();
        atomically(ledger, |l| {
            l.transfer(&TokenId::C, caller, &me, c_amount)?;
            l.mint(&TokenId::A, caller, half, &me)?;
            l.mint(&TokenId::B, caller, half, &me)?;
            Ok::<_, InsuranceError>(())
        })?;
        self.tranches_issued = issued;
        Ok((half, half))
    }

    /// Deposits all held C, half into each venue.
    pub fn invest(&mut self, ledger: &mut Ledger, venues: &VenuePair, clock: u64) -> Result<(), InsuranceError> {
        self.require(PolicyOp::Invest, clock)?;
        let me = self.account();
        let held = ledger.balance_of(&TokenId::C, &me)?;
        let to_x = Amount::from_units(held.units() / 2);
        let to_y = held - to_x;
        atomically(ledger, |l| {
            for (venue, amount) in [(&venues.x, to_x), (&venues.y, to_y)] {
                if !amount.is_zero() {
                    venue.deposit(l, &me, amount)?;
                }
            }
            Ok::<_, InsuranceError>(())
        })?;
        self.is_invested = true;
        self.c_invested = held;
        Ok(())
    }

    /// Withdraws every venue share held. All or nothing: if either venue
    /// refuses, no share is converted and the state does not change.
    pub fn divest(&mut self, ledger: &mut Ledger, venues: &VenuePair, clock: u64) -> Result<(), InsuranceError> {
        self.require(PolicyOp::Divest, clock)?;
        let me = self.account();
        let c_invested = self.c_invested;
        let (redeemed, interest, payouts) = atomically(ledger, |l| {
            let mut redeemed = [Amount::ZERO; 2];
            for (slot, venue) in redeemed.iter_mut().zip(venues.iter()) {
                let shares = l.balance_of(&venue.share_token(), &me)?;
                if !shares.is_zero() {
                    *slot = venue.withdraw(l, &me, shares)?;
                }
            }
            let c_redeemed = redeemed[0].checked_add(redeemed[1])?;
            let interest = interest_earned(c_invested, &redeemed);
            let a = l.total_supply_of(&TokenId::A)?;
            let b = l.total_supply_of(&TokenId::B)?;
            let payouts = compute_liquid_payouts(c_invested, c_redeemed, interest, a, b)?;
            Ok::<_, InsuranceError>((redeemed, interest, payouts))
        })?;
        let c_redeemed = redeemed[0] + redeemed[1];
        self.in_liquid_mode = true;
        self.c_redeemed = c_redeemed;
        self.redeemed_x = redeemed[0];
        self.redeemed_y = redeemed[1];
        self.interest = interest;
        self.liquid_payouts = Some(payouts);
        Ok(())
    }

    /// Burns the given tranches and pays their C value.
    pub fn claim(
        &mut self,
        ledger: &mut Ledger,
        clock: u64,
        caller: &AccountId,
        a_amount: Amount,
        b_amount: Amount,
    ) -> Result<Amount, InsuranceError> {
        self.require(PolicyOp::Claim, clock)?;
        self.pay_liquid(ledger, clock, caller, a_amount, b_amount)
    }

    /// `claim` with the caller's whole A and B balances.
    pub fn claim_all(&mut self, ledger: &mut Ledger, clock: u64, caller: &AccountId) -> Result<Amount, InsuranceError> {
        self.require(PolicyOp::ClaimAll, clock)?;
        let a = ledger.balance_of(&TokenId::A, caller)?;
        let b = ledger.balance_of(&TokenId::B, caller)?;
        self.pay_liquid(ledger, clock, caller, a, b)
    }

    /// Redeems A-tranches for venue shares at the frozen ratios.
    pub fn claim_a(
        &mut self,
        ledger: &mut Ledger,
        clock: u64,
        caller: &AccountId,
        to_x: Amount,
        to_y: Amount,
    ) -> Result<(Amount, Amount), InsuranceError> {
        self.require(PolicyOp::ClaimA, clock)?;
        self.pay_fallback(ledger, clock, caller, TokenId::A, to_x, to_y)
    }

    /// Redeems B-tranches for venue shares. Only callable once `t3` has passed.
    pub fn claim_b(
        &mut self,
        ledger: &mut Ledger,
        clock: u64,
        caller: &AccountId,
        to_x: Amount,
        to_y: Amount,
    ) -> Result<(Amount, Amount), InsuranceError> {
        self.require(PolicyOp::ClaimB, clock)?;
        self.pay_fallback(ledger, clock, caller, TokenId::B, to_x, to_y)
    }

    fn pay_liquid(
        &mut self,
        ledger: &mut Ledger,
        clock: u64,
        caller: &AccountId,
        a_amount: Amount,
        b_amount: Amount,
    ) -> Result<Amount, InsuranceError> {
        let mut settled = self.clone();
        settled.settle(ledger, clock)?;
        let payouts = settled.liquid_payouts.expect("settled in liquid state");
        let paid = a_amount
            .mul_floor(payouts.per_a)?
            .checked_add(b_amount.mul_floor(payouts.per_b)?)?;
        let me = self.account();
        let held = ledger.balance_of(&TokenId::C, &me)?;
        if held < paid {
            return Err(InsuranceError::InsufficientHoldings { token: TokenId::C, available: held, required: paid });
        }
        atomically(ledger, |l| {
            l.burn(&TokenId::A, caller, a_amount, &me)?;
            l.burn(&TokenId::B, caller, b_amount, &me)?;
            l.transfer(&TokenId::C, &me, caller, paid)?;
            Ok::<_, InsuranceError>(())
        })?;
        *self = settled;
        Ok(paid)
    }

    fn pay_fallback(
        &mut self,
        ledger: &mut Ledger,
        clock: u64,
        caller: &AccountId,
        tranche: TokenId,
        to_x: Amount,
        to_y: Amount,
    ) -> Result<(Amount, Amount), InsuranceError> {
        let mut settled = self.clone();
        settled.settle(ledger, clock)?;
        let ratios = settled.fallback_ratios.expect("settled in fallback state");
        let burn = to_x.checked_add(to_y)?;
        let cx_paid = to_x.mul_floor(ratios.cx_payout)?;
        let cy_paid = to_y.mul_floor(ratios.cy_payout)?;
        let me = self.account();
        for (token, required) in [(TokenId::Cx, cx_paid), (TokenId::Cy, cy_paid)] {
            let available = ledger.balance_of(&token, &me)?;
            if available < required {
                return Err(InsuranceError::InsufficientHoldings { token, available, required });
            }
        }
        atomically(ledger, |l| {
            l.burn(&tranche, caller, burn, &me)?;
            l.transfer(&TokenId::Cx, &me, caller, cx_paid)?;
            l.transfer(&TokenId::Cy, &me, caller, cy_paid)?;
            Ok::<_, InsuranceError>(())
        })?;
        *self = settled;
        Ok((cx_paid, cy_paid))
    }
}

/// Runs `f` against the ledger, restoring it if `f` fails.
pub(crate) fn atomically<T, E>(ledger: &mut Ledger, f: impl FnOnce(&mut Ledger) -> Result<T, E>) -> Result<T, E> {
    let snapshot = ledger.clone();
    let result = f(ledger);
    if result.is_err() {
        *ledger = snapshot;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    fn alice() -> AccountId {
        AccountId::agent("alice")
    }

    fn bob() -> AccountId {
        AccountId::agent("bob")
    }

    const S: u64 = 10;
    const T1: u64 = 110;
    const T2: u64 = 120;
    const T3: u64 = 140;

    struct World {
        ledger: Ledger,
        venues: VenuePair,
        policy: Policy,
    }

    /// Both venues pay 5% over the cover period.
    fn world(rate_per_step: &str) -> World {
        let mut ledger = Ledger::new();
        ledger.register_token(TokenId::C, AccountId::Genesis).unwrap();
        let venues = VenuePair::new(amt(rate_per_step), amt(rate_per_step));
        venues.register(&mut ledger).unwrap();
        let policy = Policy::new(PeriodConfig::new(0, S, T1, T2, T3).unwrap()).unwrap();
        policy.register_tokens(&mut ledger).unwrap();
        for who in [alice(), bob()] {
            ledger.mint(&TokenId::C, &who, Amount::whole(1000), &AccountId::Genesis).unwrap();
        }
        World { ledger, venues, policy }
    }

    fn accrue(w: &mut World, dt: u64) {
        w.venues.x.accrue(&mut w.ledger, dt).unwrap();
        w.venues.y.accrue(&mut w.ledger, dt).unwrap();
    }

    /// A world sitting in fallback mode with the given holdings and 50 A + 50 B outstanding.
    fn fallback_world(cx: &str, cy: &str) -> World {
        let mut w = world("0");
        w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        w.ledger.burn(&TokenId::C, &AccountId::Insurance, Amount::whole(100), &AccountId::Genesis).unwrap();
        w.ledger.mint(&TokenId::Cx, &AccountId::Insurance, amt(cx), &AccountId::Venue(VenueId::X)).unwrap();
        w.ledger.mint(&TokenId::Cy, &AccountId::Insurance, amt(cy), &AccountId::Venue(VenueId::Y)).unwrap();
        w.policy.is_invested = true;
        w
    }

    #[test]
    fn period_ordering_is_enforced() {
        assert!(PeriodConfig::new(0, 10, 10, 20, 30).is_err());
        assert!(PeriodConfig::new(0, 10, 20, 15, 30).is_err());
        assert!(PeriodConfig::new(0, 10, 20, 30, 30).is_err());
        assert!(PeriodConfig::new(11, 10, 20, 30, 40).is_err());
        assert!(PeriodConfig::new(0, 10, 20, 30, 40).is_ok());
    }

    #[test]
    fn state_follows_clock_and_flags() {
        let mut p = Policy::new(PeriodConfig::new(0, S, T1, T2, T3).unwrap()).unwrap();
        assert_eq!(p.current_state(0), PolicyState::ReadyToAccept);
        assert_eq!(p.current_state(S), PolicyState::ReadyToInvest);
        assert_eq!(p.current_state(T1), PolicyState::Liquid);
        p.is_invested = true;
        assert_eq!(p.current_state(S), PolicyState::MainCoverActive);
        assert_eq!(p.current_state(T1), PolicyState::ReadyToDivest);
        assert_eq!(p.current_state(T2), PolicyState::FallbackOnlyA);
        assert_eq!(p.current_state(T3), PolicyState::FallbackAll);
        assert_eq!(p.current_state(u64::MAX), PolicyState::FallbackAll);
        p.in_liquid_mode = true;
        assert_eq!(p.current_state(T1), PolicyState::Liquid);
        assert_eq!(p.current_state(T3), PolicyState::Liquid);
    }

    #[test]
    fn split_risk_mints_half_of_each() {
        let mut w = world("0");
        let minted = w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        assert_eq!(minted, (Amount::whole(50), Amount::whole(50)));
        assert_eq!(w.ledger.balance_of(&TokenId::A, &alice()).unwrap(), Amount::whole(50));
        assert_eq!(w.ledger.balance_of(&TokenId::B, &alice()).unwrap(), Amount::whole(50));
        assert_eq!(w.ledger.balance_of(&TokenId::C, &AccountId::Insurance).unwrap(), Amount::whole(100));
        assert_eq!(w.policy.tranches_issued(), Amount::whole(50));
    }

    #[test]
    fn split_risk_rejections() {
        let mut w = world("0");
        let snap = w.ledger.clone();
        assert!(matches!(
            w.policy.split_risk(&mut w.ledger, S, &alice(), Amount::whole(100)),
            Err(InsuranceError::WrongState { state: PolicyState::ReadyToInvest, .. })
        ));
        assert_eq!(
            w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::from_units(1)),
            Err(InsuranceError::OddAmount(Amount::from_units(1)))
        );
        assert!(matches!(
            w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(2000)),
            Err(InsuranceError::Ledger(LedgerError::InsufficientBalance { .. }))
        ));
        assert_eq!(w.ledger, snap);
        assert_eq!(w.policy.tranches_issued(), Amount::ZERO);
    }

    #[test]
    fn invest_splits_evenly() {
        let mut w = world("0");
        w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        w.policy.invest(&mut w.ledger, &w.venues, S).unwrap();
        let me = AccountId::Insurance;
        assert_eq!(w.ledger.balance_of(&TokenId::Cx, &me).unwrap(), Amount::whole(50));
        assert_eq!(w.ledger.balance_of(&TokenId::Cy, &me).unwrap(), Amount::whole(50));
        assert_eq!(w.ledger.balance_of(&TokenId::C, &me).unwrap(), Amount::ZERO);
        assert_eq!(w.policy.c_invested(), Amount::whole(100));
        assert_eq!(w.policy.current_state(S), PolicyState::MainCoverActive);
        assert!(w.policy.invest(&mut w.ledger, &w.venues, S).is_err());
    }

    #[test]
    fn failed_invest_leads_to_refund() {
        let mut w = world("0");
        w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        w.venues.x.set_liquidity(false);
        let snap = (w.ledger.clone(), w.policy.clone());
        assert_eq!(
            w.policy.invest(&mut w.ledger, &w.venues, S),
            Err(InsuranceError::Venue(VenueError::Illiquid(VenueId::X)))
        );
        assert_eq!((w.ledger.clone(), w.policy.clone()), snap);
        assert!(!w.policy.is_invested());

        assert_eq!(w.policy.current_state(T1), PolicyState::Liquid);
        w.policy.settle(&w.ledger, T1).unwrap();
        let payouts = *w.policy.liquid_payouts().unwrap();
        assert_eq!((payouts.per_a, payouts.per_b), (Amount::ONE, Amount::ONE));
        let paid = w.policy.claim(&mut w.ledger, T1, &alice(), Amount::whole(50), Amount::whole(50)).unwrap();
        assert_eq!(paid, Amount::whole(100));
        assert_eq!(w.ledger.balance_of(&TokenId::C, &alice()).unwrap(), Amount::whole(1000));
    }

    #[test]
    fn invest_with_nothing_deposited() {
        let mut w = world("0");
        w.policy.invest(&mut w.ledger, &w.venues, S).unwrap();
        assert!(w.policy.is_invested());
        assert_eq!(w.policy.c_invested(), Amount::ZERO);
        w.policy.divest(&mut w.ledger, &w.venues, T1).unwrap();
        assert_eq!(w.policy.c_redeemed(), Amount::ZERO);
    }

    #[test]
    fn divest_with_interest_enters_liquid_mode() {
        let mut w = world("0.0005");
        w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        w.policy.invest(&mut w.ledger, &w.venues, S).unwrap();
        accrue(&mut w, T1 - S);
        w.policy.divest(&mut w.ledger, &w.venues, T1).unwrap();
        assert_eq!(w.policy.c_redeemed(), Amount::whole(105));
        assert_eq!(w.policy.interest(), Amount::whole(5));
        assert_eq!(w.policy.current_state(T1), PolicyState::Liquid);
        let p = w.policy.liquid_payouts().unwrap();
        assert_eq!(p.case, PayoutCase::Equal);
        assert_eq!((p.per_a, p.per_b), (amt("1.05"), amt("1.05")));
        assert_eq!(w.ledger.balance_of(&TokenId::Cx, &AccountId::Insurance).unwrap(), Amount::ZERO);

        let paid = w.policy.claim_all(&mut w.ledger, T1, &alice()).unwrap();
        assert_eq!(paid, Amount::whole(105));
        assert_eq!(w.policy.claim_all(&mut w.ledger, T1, &alice()).unwrap(), Amount::ZERO);
        assert_eq!(w.ledger.balance_of(&TokenId::C, &AccountId::Insurance).unwrap(), Amount::ZERO);
    }

    #[test]
    fn divest_is_atomic_when_a_venue_is_illiquid() {
        let mut w = world("0");
        w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        w.policy.invest(&mut w.ledger, &w.venues, S).unwrap();
        w.venues.y.set_liquidity(false);
        let snap = (w.ledger.clone(), w.policy.clone());
        assert!(w.policy.divest(&mut w.ledger, &w.venues, T1).is_err());
        assert_eq!((w.ledger.clone(), w.policy.clone()), snap);
        assert_eq!(w.policy.current_state(T2), PolicyState::FallbackOnlyA);
    }

    #[test]
    fn divest_after_total_loss_in_one_venue() {
        let mut w = world("0.0005");
        w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        w.policy.invest(&mut w.ledger, &w.venues, S).unwrap();
        accrue(&mut w, T1 - S);
        w.venues.x.apply_loss(&mut w.ledger, Amount::ONE).unwrap();
        w.policy.divest(&mut w.ledger, &w.venues, T1).unwrap();
        assert_eq!(w.policy.c_redeemed(), amt("52.5"));
        assert_eq!(w.policy.redeemed_from(VenueId::X), Amount::ZERO);
        assert_eq!(w.policy.interest(), amt("2.5"));
        let p = w.policy.liquid_payouts().unwrap();
        assert_eq!(p.case, PayoutCase::SeniorProtected);
        assert_eq!((p.a_total, p.b_total), (amt("52.5"), Amount::ZERO));
        assert_eq!((p.per_a, p.per_b), (amt("1.05"), Amount::ZERO));
    }

    #[test]
    fn liquid_payout_table_examples() {
        let n = Amount::whole(50);
        let p = compute_liquid_payouts(Amount::whole(100), Amount::whole(105), Amount::whole(5), n, n).unwrap();
        assert_eq!((p.case, p.per_a, p.per_b), (PayoutCase::Equal, amt("1.05"), amt("1.05")));

        let redeemed = [amt("52.5"), amt("30")];
        let i = interest_earned(Amount::whole(100), &redeemed);
        assert_eq!(i, amt("2.5"));
        let p = compute_liquid_payouts(Amount::whole(100), amt("82.5"), i, n, n).unwrap();
        assert_eq!(p.case, PayoutCase::SeniorProtected);
        assert_eq!((p.a_total, p.b_total), (amt("52.5"), amt("30")));
        assert_eq!((p.per_a, p.per_b), (amt("1.05"), amt("0.6")));

        let p = compute_liquid_payouts(Amount::whole(100), Amount::whole(40), Amount::ZERO, n, n).unwrap();
        assert_eq!((p.case, p.a_total, p.b_total), (PayoutCase::SeniorImpaired, Amount::whole(40), Amount::ZERO));
        assert_eq!((p.per_a, p.per_b), (amt("0.8"), Amount::ZERO));

        // exactly half lost is still the impaired case
        let p = compute_liquid_payouts(Amount::whole(100), Amount::whole(50), Amount::ZERO, n, n).unwrap();
        assert_eq!(p.case, PayoutCase::SeniorImpaired);
    }

    #[test]
    fn liquid_payout_errors() {
        let n = Amount::whole(50);
        assert!(matches!(
            compute_liquid_payouts(Amount::whole(100), Amount::whole(60), Amount::whole(20), n, n),
            Err(InsuranceError::InvalidInterest { .. })
        ));
        assert!(matches!(
            compute_liquid_payouts(Amount::whole(100), Amount::whole(60), Amount::ZERO, n, Amount::whole(49)),
            Err(InsuranceError::UnequalTranches { .. })
        ));
        assert!(matches!(
            compute_liquid_payouts(Amount::ZERO, Amount::ONE, Amount::ZERO, Amount::ZERO, Amount::ZERO),
            Err(InsuranceError::NoTranches { .. })
        ));
        let empty = compute_liquid_payouts(Amount::ZERO, Amount::ZERO, Amount::ZERO, Amount::ZERO, Amount::ZERO).unwrap();
        assert_eq!((empty.per_a, empty.per_b), (Amount::ZERO, Amount::ZERO));
    }

    #[test]
    fn claim_edge_cases() {
        let mut w = world("0");
        w.policy.split_risk(&mut w.ledger, 0, &alice(), Amount::whole(100)).unwrap();
        w.policy.invest(&mut w.ledger, &w.venues, S).unwrap();
        w.policy.divest(&mut w.ledger, &w.venues, T1).unwrap();
        let snap = w.ledger.clone();
        assert_eq!(w.policy.claim(&mut w.ledger, T1, &alice(), Amount::ZERO, Amount::ZERO).unwrap(), Amount::ZERO);
        assert_eq!(w.ledger, snap);
        assert!(w.policy.claim(&mut w.ledger, T1, &alice(), Amount::whole(51), Amount::ZERO).is_err());
        assert!(w.policy.claim(&mut w.ledger, T1, &bob(), Amount::ONE, Amount::ZERO).is_err());
        assert_eq!(w.ledger, snap);
        assert_eq!(w.policy.claim_all(&mut w.ledger, T1, &bob()).unwrap(), Amount::ZERO);
    }

    #[test]
    fn fallback_ratio_examples() {
        let r = compute_fallback_ratios(Amount::whole(100), Amount::whole(20), Amount::whole(1500)).unwrap();
        assert_eq!((r.cx_payout, r.cy_payout), (amt("0.4"), Amount::whole(30)));
        let r = compute_fallback_ratios(Amount::whole(100), Amount::ZERO, Amount::whole(1500)).unwrap();
        assert_eq!((r.cx_payout, r.cy_payout), (Amount::ZERO, Amount::whole(30)));
        let r = compute_fallback_ratios(Amount::whole(100), Amount::whole(50), Amount::whole(50)).unwrap();
        assert_eq!((r.cx_payout, r.cy_payout), (Amount::ONE, Amount::ONE));
        assert!(compute_fallback_ratios(Amount::ZERO, Amount::ONE, Amount::ONE).is_err());
    }

    #[test]
    fn claim_a_pays_at_frozen_ratios() {
        let mut w = fallback_world("20", "1500");
        assert!(matches!(
            w.policy.claim_a(&mut w.ledger, S, &alice(), Amount::ZERO, Amount::whole(10)),
            Err(InsuranceError::WrongState { state: PolicyState::MainCoverActive, .. })
        ));
        let paid = w.policy.claim_a(&mut w.ledger, T2, &alice(), Amount::ZERO, Amount::whole(10)).unwrap();
        assert_eq!(paid, (Amount::ZERO, Amount::whole(300)));
        let paid = w.policy.claim_a(&mut w.ledger, T2, &alice(), Amount::whole(5), Amount::whole(5)).unwrap();
        assert_eq!(paid, (Amount::whole(2), Amount::whole(150)));
        let r = w.policy.fallback_ratios().unwrap();
        assert_eq!((r.cx_payout, r.cy_payout), (amt("0.4"), Amount::whole(30)));
    }

    #[test]
    fn claim_b_waits_for_t3_and_takes_the_rest() {
        let mut w = fallback_world("20", "1500");
        w.policy.claim_a(&mut w.ledger, T2, &alice(), Amount::ZERO, Amount::whole(50)).unwrap();
        assert!(matches!(
            w.policy.claim_b(&mut w.ledger, T2, &alice(), Amount::whole(50), Amount::ZERO),
            Err(InsuranceError::WrongState { state: PolicyState::FallbackOnlyA, .. })
        ));
        assert_eq!(w.policy.claim_b(&mut w.ledger, T3, &alice(), Amount::ZERO, Amount::ZERO).unwrap(), (Amount::ZERO, Amount::ZERO));
        // Cy is gone, so B cannot take it
        assert!(matches!(
            w.policy.claim_b(&mut w.ledger, T3, &alice(), Amount::ZERO, Amount::ONE),
            Err(InsuranceError::InsufficientHoldings { token: TokenId::Cy, .. })
        ));
        let paid = w.policy.claim_b(&mut w.ledger, T3, &alice(), Amount::whole(50), Amount::ZERO).unwrap();
        assert_eq!(paid, (Amount::whole(20), Amount::ZERO));
        let me = AccountId::Insurance;
        assert_eq!(w.ledger.balance_of(&TokenId::Cx, &me).unwrap(), Amount::ZERO);
        assert_eq!(w.ledger.balance_of(&TokenId::Cy, &me).unwrap(), Amount::ZERO);
    }

    #[test]
    fn ratios_freeze_at_first_fallback_settlement() {
        let mut w = fallback_world("20", "1500");
        w.policy.settle(&w.ledger, T2).unwrap();
        let frozen = *w.policy.fallback_ratios().unwrap();
        w.policy.claim_a(&mut w.ledger, T2, &alice(), Amount::whole(50), Amount::ZERO).unwrap();
        w.policy.settle(&w.ledger, T3).unwrap();
        assert_eq!(*w.policy.fallback_ratios().unwrap(), frozen);
    }

    proptest! {
        // Any A choice followed by B filling the remaining capacity drains both
        // assets down to less than one unit per tranche unit.
        #[test]
        fn fallback_exhausts_holdings(
            tranches in 1u128..1_000_000_000_000_000_000_000u128,
            cx in 0u128..1_000_000_000_000_000_000_000_000u128,
            cy in 0u128..1_000_000_000_000_000_000_000_000u128,
            a_to_x_frac in 0u128..=1000,
        ) {
            let mut w = world("0");
            let two_n = Amount::from_units(tranches * 2);
            w.ledger.mint(&TokenId::C, &alice(), two_n, &AccountId::Genesis).unwrap();
            w.policy.split_risk(&mut w.ledger, 0, &alice(), two_n).unwrap();
            w.ledger.burn(&TokenId::C, &AccountId::Insurance, two_n, &AccountId::Genesis).unwrap();
            w.ledger.mint(&TokenId::Cx, &AccountId::Insurance, Amount::from_units(cx), &AccountId::Venue(VenueId::X)).unwrap();
            w.ledger.mint(&TokenId::Cy, &AccountId::Insurance, Amount::from_units(cy), &AccountId::Venue(VenueId::Y)).unwrap();
            w.policy.is_invested = true;

            let a_to_x = Amount::from_units(tranches * a_to_x_frac / 1000);
            let a_to_y = Amount::from_units(tranches) - a_to_x;
            w.policy.claim_a(&mut w.ledger, T2, &alice(), a_to_x, a_to_y).unwrap();

            let r = *w.policy.fallback_ratios().unwrap();
            let me = AccountId::Insurance;
            let cx_left = w.ledger.balance_of(&TokenId::Cx, &me).unwrap();
            let b_total = Amount::from_units(tranches);
            let cap_x = if r.cx_payout.is_zero() { b_total } else { cx_left.div_floor(r.cx_payout).unwrap().min(b_total) };
            let b_to_x = cap_x;
            let b_to_y = b_total - b_to_x;
            w.policy.claim_b(&mut w.ledger, T3, &alice(), b_to_x, b_to_y).unwrap();

            prop_assert!(w.ledger.balance_of(&TokenId::Cx, &me).unwrap().units() < 2 * tranches);
            prop_assert!(w.ledger.balance_of(&TokenId::Cy, &me).unwrap().units() < 2 * tranches);
            prop_assert_eq!(w.ledger.total_supply_of(&TokenId::A).unwrap(), Amount::ZERO);
            prop_assert_eq!(w.ledger.total_supply_of(&TokenId::B).unwrap(), Amount::ZERO);
        }
    }
}
