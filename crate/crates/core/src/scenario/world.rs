//! Simulated world: one ledger with the venues, policy and pools acting on it.
//!
//! Every agent operation either succeeds or leaves the world exactly as it
//! was; failures are returned as values for the run log.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::amm::{Pool, PoolError};
use crate::fixed::{Amount, ArithmeticError};
use crate::insurance::{InsuranceError, Policy, PolicyState};
use crate::ledger::{AccountId, Ledger, LedgerError, TokenId, VenueId};
use crate::scenario::config::{Action, Diagnostic, ProtocolOp, Scenario, VenueEvent};
use crate::venues::{VenueError, VenuePair};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("clock cannot move back from {from} to {to}")]
    TimeReversal { from: u64, to: u64 },
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("unknown pool `{0}`")]
    UnknownPool(String),
    #[error("pool `{0}` does not trade B against C")]
    NotInsurancePool(String),
    #[error("B sale returned {proceeds} C, below the slippage floor {minimum}")]
    Slippage { proceeds: Amount, minimum: Amount },
    #[error("caller holds {available} C after the sale but must repay {required}")]
    Underfunded { available: Amount, required: Amount },
    #[error(transparent)]
    Insurance(#[from] InsuranceError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Venue(#[from] VenueError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl From<ArithmeticError> for ActionError {
    fn from(e: ArithmeticError) -> Self {
        ActionError::Ledger(e.into())
    }
}

/// Result of one atomic insure composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InsureReceipt {
    pub a_received: Amount,
    pub b_sold: Amount,
    pub sale_proceeds: Amount,
    /// C the caller spent net of the sale: `2 * amount - sale_proceeds`.
    pub caller_paid: Amount,
}

/// Running totals of what an agent redeemed from the policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClaimTotals {
    pub a_burned: Amount,
    pub b_burned: Amount,
    pub c_received: Amount,
    pub cx_received: Amount,
    pub cy_received: Amount,
}

/// An agent's liquidity in one pool, valued at each withdrawal's pre-trade spot price.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LpPosition {
    /// Shares minted to this agent and not yet burned.
    pub shares: Amount,
    pub deposited0: Amount,
    pub deposited1: Amount,
    pub withdrawn0: Amount,
    pub withdrawn1: Amount,
    /// Cost basis still in the pool.
    basis0: Amount,
    basis1: Amount,
    /// Value of the withdrawn basis had it been held, in token1.
    pub hold_value: f64,
    /// Value actually withdrawn, in token1.
    pub lp_value: f64,
}

impl LpPosition {
    /// `1 - lp/hold` over everything withdrawn so far; `None` before any withdrawal.
    pub fn divergence_loss(&self) -> Option<f64> {
        (self.hold_value > 0.0).then(|| 1.0 - self.lp_value / self.hold_value)
    }
}

/// A venue event as applied by [`World::advance_to`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedEvent {
    pub time: u64,
    pub venue: VenueId,
    pub event: VenueEvent,
    pub outcome: Result<String, ActionError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    clock: u64,
    ledger: Ledger,
    venues: VenuePair,
    policy: Policy,
    pools: Vec<Pool>,
    agents: Vec<String>,
    schedule: Vec<(u64, VenueId, VenueEvent)>,
    next_event: usize,
    initial_c: Amount,
    accrued: Amount,
    lost: Amount,
    claims: BTreeMap<String, ClaimTotals>,
    positions: BTreeMap<(String, String), LpPosition>,
}

fn ledger_err(e: LedgerError) -> Vec<Diagnostic> {
    vec![Diagnostic::new("", e.to_string())]
}

impl World {
    pub fn build(scenario: &Scenario) -> Result<World, Vec<Diagnostic>> {
        let diags = scenario.validate();
        if !diags.is_empty() {
            return Err(diags);
        }
        let rate = |id| scenario.venue(id).map(|v| v.rate_per_step).unwrap_or(Amount::ZERO);
        let venues = VenuePair::new(rate(VenueId::X), rate(VenueId::Y));
        let policy = Policy::new(scenario.period).map_err(|e| vec![Diagnostic::new("period", e.to_string())])?;
        let mut ledger = Ledger::new();
        ledger.register_token(TokenId::C, AccountId::Genesis).map_err(ledger_err)?;
        venues.register(&mut ledger).map_err(ledger_err)?;
        policy.register_tokens(&mut ledger).map_err(ledger_err)?;
        let mut pools = Vec::new();
        for (i, spec) in scenario.pools.iter().enumerate() {
            let pool = Pool::new(spec.id.clone(), spec.token0.clone(), spec.token1.clone(), spec.fee)
                .map_err(|e| vec![Diagnostic::new(format!("pools[{i}]"), e.to_string())])?;
            pool.register(&mut ledger).map_err(ledger_err)?;
            pools.push(pool);
        }
        let mut initial_c = Amount::ZERO;
        for agent in &scenario.agents {
            ledger
                .mint(&TokenId::C, &AccountId::agent(&agent.id), agent.initial_c, &AccountId::Genesis)
                .map_err(ledger_err)?;
            initial_c = initial_c.checked_add(agent.initial_c).map_err(|e| ledger_err(e.into()))?;
        }
        let mut schedule: Vec<_> = scenario
            .venues
            .iter()
            .flat_map(|v| v.events.iter().map(move |e| (e.time(), v.id, e.clone())))
            .collect();
        schedule.sort_by_key(|(t, _, _)| *t);
        Ok(World {
            clock: scenario.period.deploy,
            ledger,
            venues,
            policy,
            pools,
            agents: scenario.agents.iter().map(|a| a.id.clone()).collect(),
            schedule,
            next_event: 0,
            initial_c,
            accrued: Amount::ZERO,
            lost: Amount::ZERO,
            claims: BTreeMap::new(),
            positions: BTreeMap::new(),
        })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn venues(&self) -> &VenuePair {
        &self.venues
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn pool(&self, id: &str) -> Option<&Pool> {
        self.pools.iter().find(|p| p.id() == id)
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn state(&self) -> PolicyState {
        self.policy.current_state(self.clock)
    }

    pub fn claims(&self) -> &BTreeMap<String, ClaimTotals> {
        &self.claims
    }

    pub fn positions(&self) -> &BTreeMap<(String, String), LpPosition> {
        &self.positions
    }

    pub fn initial_c(&self) -> Amount {
        self.initial_c
    }

    pub fn accrued(&self) -> Amount {
        self.accrued
    }

    pub fn lost(&self) -> Amount {
        self.lost
    }

    /// `initial + accrued - lost`, the C supply conservation demands.
    pub fn expected_c_supply(&self) -> Amount {
        self.initial_c.checked_add(self.accrued).and_then(|s| s.checked_sub(self.lost)).unwrap_or(Amount::MAX)
    }

    pub fn c_supply(&self) -> Amount {
        self.ledger.total_supply_of(&TokenId::C).unwrap_or(Amount::ZERO)
    }

    pub fn balance(&self, agent: &str, token: &TokenId) -> Amount {
        self.ledger.balance_of(token, &AccountId::agent(agent)).unwrap_or(Amount::ZERO)
    }

    /// Accrues interest up to `t`, applying each scheduled venue event at its own time.
    pub fn advance_to(&mut self, t: u64) -> Result<Vec<AppliedEvent>, ActionError> {
        if t < self.clock {
            return Err(ActionError::TimeReversal { from: self.clock, to: t });
        }
        let mut applied = Vec::new();
        while let Some((time, venue, event)) = self.schedule.get(self.next_event).cloned() {
            if time > t {
                break;
            }
            self.accrue_to(time)?;
            let outcome = self.apply_venue_event(venue, &event);
            applied.push(AppliedEvent { time, venue, event, outcome });
            self.next_event += 1;
        }
        self.accrue_to(t)?;
        Ok(applied)
    }

    fn accrue_to(&mut self, t: u64) -> Result<(), ActionError> {
        let dt = t - self.clock;
        for id in VenueId::ALL {
            let minted = self.venues.get_mut(id).accrue(&mut self.ledger, dt)?;
            self.accrued = self.accrued.checked_add(minted)?;
        }
        self.clock = t;
        Ok(())
    }

    fn apply_venue_event(&mut self, venue: VenueId, event: &VenueEvent) -> Result<String, ActionError> {
        match event {
            VenueEvent::Loss { fraction, .. } => {
                let burned = self.venues.get_mut(venue).apply_loss(&mut self.ledger, *fraction)?;
                self.lost = self.lost.checked_add(burned)?;
                Ok(format!("rate {} after burning {burned} C", self.venues.get(venue).exchange_rate()))
            }
            VenueEvent::Liquidity { liquid, .. } => {
                self.venues.get_mut(venue).set_liquidity(*liquid);
                Ok(if *liquid { "liquid".into() } else { "illiquid".into() })
            }
        }
    }

    /// Calls invest or divest on the policy.
    pub fn protocol(&mut self, op: ProtocolOp) -> Result<String, ActionError> {
        match op {
            ProtocolOp::Invest => {
                self.policy.invest(&mut self.ledger, &self.venues, self.clock)?;
                Ok(format!("invested {} C", self.policy.c_invested()))
            }
            ProtocolOp::Divest => {
                self.policy.divest(&mut self.ledger, &self.venues, self.clock)?;
                Ok(format!("redeemed {} C", self.policy.c_redeemed()))
            }
        }
    }

    /// Runs one agent action. On error the world is unchanged.
    pub fn execute(&mut self, agent: &str, action: &Action) -> Result<String, ActionError> {
        if !self.agents.iter().any(|a| a == agent) {
            return Err(ActionError::UnknownAgent(agent.to_string()));
        }
        let snapshot = self.clone();
        let result = self.dispatch(agent, action);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn dispatch(&mut self, agent: &str, action: &Action) -> Result<String, ActionError> {
        let me = AccountId::agent(agent);
        let clock = self.clock;
        match action {
            Action::SplitRisk { amount } => {
                let (a, b) = self.policy.split_risk(&mut self.ledger, clock, &me, *amount)?;
                Ok(format!("minted {a} A and {b} B"))
            }
            Action::Invest => self.protocol(ProtocolOp::Invest),
            Action::Divest => self.protocol(ProtocolOp::Divest),
            Action::Claim { a, b } => {
                let paid = self.policy.claim(&mut self.ledger, clock, &me, *a, *b)?;
                self.record_claim(agent, *a, *b, paid, Amount::ZERO, Amount::ZERO)?;
                Ok(format!("received {paid} C"))
            }
            Action::ClaimAll => {
                let a = self.balance(agent, &TokenId::A);
                let b = self.balance(agent, &TokenId::B);
                let paid = self.policy.claim_all(&mut self.ledger, clock, &me)?;
                self.record_claim(agent, a, b, paid, Amount::ZERO, Amount::ZERO)?;
                Ok(format!("received {paid} C"))
            }
            Action::ClaimA { x, y } => {
                let (cx, cy) = self.policy.claim_a(&mut self.ledger, clock, &me, *x, *y)?;
                self.record_claim(agent, *x + *y, Amount::ZERO, Amount::ZERO, cx, cy)?;
                Ok(format!("received {cx} Cx and {cy} Cy"))
            }
            Action::ClaimB { x, y } => {
                let (cx, cy) = self.policy.claim_b(&mut self.ledger, clock, &me, *x, *y)?;
                self.record_claim(agent, Amount::ZERO, *x + *y, Amount::ZERO, cx, cy)?;
                Ok(format!("received {cx} Cx and {cy} Cy"))
            }
            Action::Swap { pool, token_in, amount } => {
                let p = self.find_pool(pool)?;
                let out = p.swap_exact_in(&mut self.ledger, &me, token_in, *amount)?;
                Ok(format!("received {out}"))
            }
            Action::AddLiquidity { pool, amount0, amount1 } => {
                let p = self.find_pool(pool)?;
                let shares = p.add_liquidity(&mut self.ledger, &me, *amount0, *amount1)?;
                let pos = self.positions.entry((agent.to_string(), pool.clone())).or_default();
                pos.shares = pos.shares.checked_add(shares)?;
                pos.deposited0 = pos.deposited0.checked_add(*amount0)?;
                pos.deposited1 = pos.deposited1.checked_add(*amount1)?;
                pos.basis0 = pos.basis0.checked_add(*amount0)?;
                pos.basis1 = pos.basis1.checked_add(*amount1)?;
                Ok(format!("minted {shares} LP"))
            }
            Action::RemoveLiquidity { pool, shares } => {
                let p = self.find_pool(pool)?;
                let shares = match shares {
                    Some(s) => *s,
                    None => self.ledger.balance_of(&p.lp_token(), &me)?,
                };
                let price = p.spot_price(&self.ledger).ok().map(|p| p.value());
                let (out0, out1) = p.remove_liquidity(&mut self.ledger, &me, shares)?;
                self.record_withdrawal(agent, pool, shares, out0, out1, price)?;
                Ok(format!("received {out0} and {out1}"))
            }
            Action::Transfer { token, to, amount } => {
                let dest = if to == "insurance" {
                    AccountId::Insurance
                } else if self.agents.iter().any(|a| a == to) {
                    AccountId::agent(to)
                } else {
                    return Err(ActionError::UnknownAgent(to.clone()));
                };
                self.ledger.transfer(token, &me, &dest, *amount)?;
                Ok(format!("sent {amount} {token} to {dest}"))
            }
            Action::AtomicInsure { amount, pool, max_slippage } => {
                let r = self.insure(agent, *amount, pool, *max_slippage)?;
                Ok(format!("received {} A for {} C", r.a_received, r.caller_paid))
            }
        }
    }

    /// Borrows `2 * amount` C, splits it, sells the B half into `pool` and repays.
    ///
    /// The caller ends with `amount` A and pays `2 * amount - proceeds` C. The
    /// loan is a Genesis mint that must be burned in full before returning.
    pub fn atomic_insure(
        &mut self,
        agent: &str,
        amount: Amount,
        pool: &str,
        max_slippage: Option<Amount>,
    ) -> Result<InsureReceipt, ActionError> {
        if !self.agents.iter().any(|a| a == agent) {
            return Err(ActionError::UnknownAgent(agent.to_string()));
        }
        let snapshot = self.clone();
        let result = self.insure(agent, amount, pool, max_slippage);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn insure(&mut self, agent: &str, amount: Amount, pool: &str, max_slippage: Option<Amount>) -> Result<InsureReceipt, ActionError> {
        let p = self.find_pool(pool)?;
        if !(p.contains(&TokenId::B) && p.contains(&TokenId::C)) {
            return Err(ActionError::NotInsurancePool(pool.to_string()));
        }
        if amount.is_zero() {
            return Ok(InsureReceipt {
                a_received: Amount::ZERO,
                b_sold: Amount::ZERO,
                sale_proceeds: Amount::ZERO,
                caller_paid: Amount::ZERO,
            });
        }
        let me = AccountId::agent(agent);
        let loan = amount.checked_add(amount)?;
        self.ledger.mint(&TokenId::C, &me, loan, &AccountId::Genesis)?;
        let (a, b) = self.policy.split_risk(&mut self.ledger, self.clock, &me, loan)?;
        let p = self.find_pool(pool)?;
        let reserve_b = self.ledger.balance_of(&TokenId::B, &p.account())?;
        let reserve_c = self.ledger.balance_of(&TokenId::C, &p.account())?;
        let proceeds = p.swap_exact_in(&mut self.ledger, &me, &TokenId::B, b)?;
        if let Some(slippage) = max_slippage {
            let ideal = b.mul_div_floor(reserve_c, reserve_b)?;
            let minimum = ideal.mul_ceil(Amount::ONE.checked_sub(slippage)?)?;
            if proceeds < minimum {
                return Err(ActionError::Slippage { proceeds, minimum });
            }
        }
        let available = self.ledger.balance_of(&TokenId::C, &me)?;
        if available < loan {
            return Err(ActionError::Underfunded { available, required: loan });
        }
        self.ledger.burn(&TokenId::C, &me, loan, &AccountId::Genesis)?;
        Ok(InsureReceipt { a_received: a, b_sold: b, sale_proceeds: proceeds, caller_paid: loan - proceeds })
    }

    /// Unwinds every liquidity position and claims for every agent.
    ///
    /// Returns `(agent, action, outcome)` per attempted step. An undivested
    /// policy in `ReadyToDivest` is divested first. In fallback mode each claim
    /// fills the venue paying more C per tranche first, A holders before B.
    pub fn settle_all(&mut self) -> Vec<(String, Action, Result<String, ActionError>)> {
        let mut steps = Vec::new();
        let agents = self.agents.clone();
        for agent in &agents {
            for pool in self.pools.clone() {
                if !self.balance(agent, &pool.lp_token()).is_zero() {
                    let action = Action::RemoveLiquidity { pool: pool.id().to_string(), shares: None };
                    let outcome = self.execute(agent, &action);
                    steps.push((agent.clone(), action, outcome));
                }
            }
        }
        if self.state() == PolicyState::ReadyToDivest {
            let outcome = self.protocol(ProtocolOp::Divest);
            steps.push((String::new(), Action::Divest, outcome));
        }
        match self.state() {
            PolicyState::Liquid => {
                for agent in &agents {
                    if !(self.balance(agent, &TokenId::A).is_zero() && self.balance(agent, &TokenId::B).is_zero()) {
                        let outcome = self.execute(agent, &Action::ClaimAll);
                        steps.push((agent.clone(), Action::ClaimAll, outcome));
                    }
                }
            }
            state @ (PolicyState::FallbackOnlyA | PolicyState::FallbackAll) => {
                if let Err(e) = self.policy.settle(&self.ledger, self.clock) {
                    steps.push((String::new(), Action::ClaimAll, Err(e.into())));
                    return steps;
                }
                let mut tranches = vec![TokenId::A];
                if state == PolicyState::FallbackAll {
                    tranches.push(TokenId::B);
                }
                for tranche in tranches {
                    for agent in &agents {
                        let held = self.balance(agent, &tranche);
                        if held.is_zero() {
                            continue;
                        }
                        let (x, y) = self.fallback_split(held);
                        let action = if tranche == TokenId::A { Action::ClaimA { x, y } } else { Action::ClaimB { x, y } };
                        let outcome = self.execute(agent, &action);
                        steps.push((agent.clone(), action, outcome));
                    }
                }
            }
            _ => {}
        }
        steps
    }

    /// Splits `amount` tranches between the venues, most valuable first, within remaining holdings.
    ///
    /// Floored ratios leave each venue able to serve slightly more than its
    /// share of the outstanding tranches. That spare capacity is kept in the
    /// venue paying fewer share units per tranche, so the shares left behind
    /// stay under about one unit per tranche token.
    fn fallback_split(&self, amount: Amount) -> (Amount, Amount) {
        let Some(ratios) = self.policy.fallback_ratios() else { return (amount, Amount::ZERO) };
        let me = self.policy.account();
        let value = |payout: Amount, id: VenueId| payout.mul_floor(self.venues.get(id).exchange_rate()).unwrap_or(Amount::MAX);
        let capacity = |payout: Amount, token: &TokenId| {
            let held = self.ledger.balance_of(token, &me).unwrap_or(Amount::ZERO);
            if payout.is_zero() {
                Amount::MAX
            } else {
                held.div_floor(payout).unwrap_or(Amount::MAX)
            }
        };
        let mut cap_x = capacity(ratios.cx_payout, &TokenId::Cx);
        let mut cap_y = capacity(ratios.cy_payout, &TokenId::Cy);
        let supply = |token: &TokenId| self.ledger.total_supply_of(token).unwrap_or(Amount::ZERO);
        let outstanding = supply(&TokenId::A).checked_add(supply(&TokenId::B)).unwrap_or(Amount::MAX);
        let spare = cap_x.checked_add(cap_y).unwrap_or(Amount::MAX).saturating_sub(outstanding);
        if ratios.cx_payout <= ratios.cy_payout {
            cap_x = cap_x.saturating_sub(spare);
        } else {
            cap_y = cap_y.saturating_sub(spare);
        }
        if value(ratios.cx_payout, VenueId::X) >= value(ratios.cy_payout, VenueId::Y) {
            let x = amount.min(cap_x);
            (x, amount - x)
        } else {
            let y = amount.min(cap_y);
            (amount - y, y)
        }
    }

    fn find_pool(&self, id: &str) -> Result<Pool, ActionError> {
        self.pool(id).cloned().ok_or_else(|| ActionError::UnknownPool(id.to_string()))
    }

    fn record_claim(&mut self, agent: &str, a: Amount, b: Amount, c: Amount, cx: Amount, cy: Amount) -> Result<(), ActionError> {
        let t = self.claims.entry(agent.to_string()).or_default();
        t.a_burned = t.a_burned.checked_add(a)?;
        t.b_burned = t.b_burned.checked_add(b)?;
        t.c_received = t.c_received.checked_add(c)?;
        t.cx_received = t.cx_received.checked_add(cx)?;
        t.cy_received = t.cy_received.checked_add(cy)?;
        Ok(())
    }

    fn record_withdrawal(
        &mut self,
        agent: &str,
        pool: &str,
        shares: Amount,
        out0: Amount,
        out1: Amount,
        price: Option<f64>,
    ) -> Result<(), ActionError> {
        let pos = self.positions.entry((agent.to_string(), pool.to_string())).or_default();
        pos.withdrawn0 = pos.withdrawn0.checked_add(out0)?;
        pos.withdrawn1 = pos.withdrawn1.checked_add(out1)?;
        // shares received by transfer carry no basis
        let own = shares.min(pos.shares);
        if own.is_zero() {
            return Ok(());
        }
        let basis0 = pos.basis0.mul_div_floor(own, pos.shares)?;
        let basis1 = pos.basis1.mul_div_floor(own, pos.shares)?;
        pos.basis0 = pos.basis0 - basis0;
        pos.basis1 = pos.basis1 - basis1;
        pos.shares = pos.shares - own;
        if let Some(p) = price {
            let share_of_out = own.to_f64() / shares.to_f64();
            pos.hold_value += p * basis0.to_f64() + basis1.to_f64();
            pos.lp_value += share_of_out * (p * out0.to_f64() + out1.to_f64());
        }
        Ok(())
    }
}
