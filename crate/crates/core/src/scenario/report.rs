//! Runs a scenario to its horizon and assembles the report.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fixed::Amount;
use crate::insurance::{FallbackRatios, LiquidPayouts, PolicyState};
use crate::ledger::{AccountId, TokenId, VenueId};
use crate::scenario::config::{Action, Diagnostic, Scenario};
use crate::scenario::world::{ClaimTotals, World};

pub const TOOL_VERSION: &str = concat!("tranche-sim ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub time: u64,
    /// `venue:x`, `protocol`, `agent:<id>` or `settlement`.
    pub actor: String,
    pub action: serde_json::Value,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VenueSnapshot {
    pub id: VenueId,
    pub exchange_rate: Amount,
    pub liquid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolSnapshot {
    pub id: String,
    pub reserve0: Amount,
    pub reserve1: Amount,
    /// Token0 in token1; absent while the pool is empty.
    pub price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: u64,
    pub state: PolicyState,
    pub venues: Vec<VenueSnapshot>,
    pub pools: Vec<PoolSnapshot>,
    /// Account name to token name to balance, non-zero entries only.
    pub balances: BTreeMap<String, BTreeMap<String, Amount>>,
    pub c_supply: Amount,
    pub expected_c_supply: Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentPayout {
    pub agent: String,
    #[serde(flatten)]
    pub claims: ClaimTotals,
    /// C paid per tranche token claimed in liquid mode, rounded up so that
    /// claims of at least one whole token recover the exact rate.
    pub c_per_tranche: Option<Amount>,
    pub final_balances: BTreeMap<String, Amount>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpOutcome {
    pub agent: String,
    pub pool: String,
    pub deposited0: Amount,
    pub deposited1: Amount,
    pub withdrawn0: Amount,
    pub withdrawn1: Amount,
    pub hold_value: f64,
    pub lp_value: f64,
    /// `1 - lp_value / hold_value`; fees can make it negative.
    pub divergence_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub final_state: PolicyState,
    pub is_invested: bool,
    pub in_liquid_mode: bool,
    pub tranches_issued: Amount,
    pub c_invested: Amount,
    pub c_redeemed: Amount,
    pub redeemed_x: Amount,
    pub redeemed_y: Amount,
    pub interest: Amount,
    pub liquid_payouts: Option<LiquidPayouts>,
    pub fallback_ratios: Option<FallbackRatios>,
    /// What the contract still holds.
    pub residual: BTreeMap<String, Amount>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conservation {
    pub initial_c: Amount,
    pub accrued: Amount,
    pub lost: Amount,
    pub expected_c_supply: Amount,
    pub c_supply: Amount,
    /// Snapshot times at which supply differed from `initial + accrued - lost`.
    pub violations: Vec<u64>,
    /// Every token's supply equals the sum of its balances.
    pub balances_sum_to_supply: bool,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.c_supply == self.expected_c_supply && self.balances_sum_to_supply
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<LogEntry>,
    pub payouts: Vec<AgentPayout>,
    pub liquidity: Vec<LpOutcome>,
    pub policy: PolicySummary,
    pub conservation: Conservation,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn payout(&self, agent: &str) -> Option<&AgentPayout> {
        self.payouts.iter().find(|p| p.agent == agent)
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("runs always snapshot the horizon")
    }

    pub fn failures(&self) -> impl Iterator<Item = &LogEntry> {
        self.log.iter().filter(|e| !e.ok)
    }
}

/// Hex SHA-256 of the scenario's canonical JSON.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let canonical = serde_json::to_vec(scenario).expect("scenario serializes");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

enum Step<'a> {
    Protocol(&'a crate::scenario::config::ProtocolAction),
    Agent(usize, &'a Action),
}

/// Runs `scenario` to its horizon. Only validation failures are errors;
/// everything that goes wrong during the run is recorded in the log.
pub fn run(scenario: &Scenario) -> Result<RunReport, Vec<Diagnostic>> {
    let mut world = World::build(scenario)?;
    let scripts = scenario.expanded_actions();

    // key: (time, class, agent index, action index)
    let mut agenda: Vec<((u64, u8, usize, usize), Step)> = Vec::new();
    for (i, pa) in scenario.protocol_actions.iter().enumerate() {
        agenda.push(((pa.time, 0, 0, i), Step::Protocol(pa)));
    }
    for (i, script) in scripts.iter().enumerate() {
        for (j, ta) in script.iter().enumerate() {
            agenda.push(((ta.time, 1, i, j), Step::Agent(i, &ta.action)));
        }
    }
    agenda.sort_by_key(|(k, _)| *k);

    let p = scenario.period;
    let mut times: BTreeSet<u64> = agenda.iter().map(|((t, ..), _)| *t).collect();
    times.extend(scenario.venues.iter().flat_map(|v| v.events.iter().map(|e| e.time())));
    times.extend([p.deploy, p.start, p.t1, p.t2, p.t3, scenario.horizon].into_iter().filter(|t| *t <= scenario.horizon));

    let mut log = Vec::new();
    let mut snapshots = Vec::new();
    let mut next = 0;
    for t in times {
        match world.advance_to(t) {
            Ok(events) => {
                for e in events {
                    log.push(entry(e.time, format!("venue:{}", e.venue), to_value(&e.event), e.outcome));
                }
            }
            Err(e) => log.push(entry(t, "clock".into(), serde_json::Value::Null, Err(e))),
        }
        while let Some((key, step)) = agenda.get(next) {
            if key.0 != t {
                break;
            }
            match step {
                Step::Protocol(pa) => {
                    let outcome = world.protocol(pa.action);
                    log.push(entry(t, "protocol".into(), to_value(pa), outcome));
                }
                Step::Agent(i, action) => {
                    let agent = &scenario.agents[*i].id;
                    let outcome = world.execute(agent, action);
                    log.push(entry(t, format!("agent:{agent}"), to_value(action), outcome));
                }
            }
            next += 1;
        }
        if t == scenario.horizon && scenario.settle_at_horizon {
            for (agent, action, outcome) in world.settle_all() {
                let actor = if agent.is_empty() { "settlement".to_string() } else { format!("settlement:{agent}") };
                log.push(entry(t, actor, to_value(&action), outcome));
            }
        }
        snapshots.push(snapshot(&world));
    }

    let violations = snapshots.iter().filter(|s| s.c_supply != s.expected_c_supply).map(|s| s.time).collect();
    let conservation = Conservation {
        initial_c: world.initial_c(),
        accrued: world.accrued(),
        lost: world.lost(),
        expected_c_supply: world.expected_c_supply(),
        c_supply: world.c_supply(),
        violations,
        balances_sum_to_supply: world.ledger().check_conservation().is_ok(),
    };
    Ok(RunReport {
        tool_version: TOOL_VERSION.to_string(),
        scenario_hash: scenario_hash(scenario),
        scenario: scenario.clone(),
        snapshots,
        log,
        payouts: payouts(&world),
        liquidity: liquidity(&world),
        policy: policy_summary(&world),
        conservation,
    })
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("actions serialize")
}

fn entry<E: std::fmt::Display>(time: u64, actor: String, action: serde_json::Value, outcome: Result<String, E>) -> LogEntry {
    match outcome {
        Ok(detail) => LogEntry { time, actor, action, ok: true, detail },
        Err(e) => LogEntry { time, actor, action, ok: false, detail: e.to_string() },
    }
}

fn snapshot(world: &World) -> Snapshot {
    let ledger = world.ledger();
    let mut balances: BTreeMap<String, BTreeMap<String, Amount>> = BTreeMap::new();
    for token in ledger.tokens() {
        for (account, amount) in ledger.holders(token) {
            balances.entry(account.to_string()).or_default().insert(token.to_string(), amount);
        }
    }
    Snapshot {
        time: world.clock(),
        state: world.state(),
        venues: world
            .venues()
            .iter()
            .map(|v| VenueSnapshot { id: v.id(), exchange_rate: v.exchange_rate(), liquid: v.is_liquid() })
            .collect(),
        pools: world
            .pools()
            .iter()
            .map(|p| {
                let (reserve0, reserve1) = p.reserves(ledger).unwrap_or_default();
                PoolSnapshot {
                    id: p.id().to_string(),
                    reserve0,
                    reserve1,
                    price: p.spot_price(ledger).ok().map(|p| p.value()),
                }
            })
            .collect(),
        balances,
        c_supply: world.c_supply(),
        expected_c_supply: world.expected_c_supply(),
    }
}

fn payouts(world: &World) -> Vec<AgentPayout> {
    let ledger = world.ledger();
    world
        .agents()
        .iter()
        .map(|agent| {
            let claims = world.claims().get(agent).copied().unwrap_or_default();
            let tranches = claims.a_burned.checked_add(claims.b_burned).unwrap_or(Amount::MAX);
            let c_per_tranche = (!tranches.is_zero() && claims.cx_received.is_zero() && claims.cy_received.is_zero())
                .then(|| claims.c_received.mul_div_ceil(Amount::ONE, tranches).ok())
                .flatten();
            let me = AccountId::agent(agent);
            let final_balances = ledger
                .tokens()
                .filter_map(|t| {
                    let b = ledger.balance_of(t, &me).unwrap_or(Amount::ZERO);
                    (!b.is_zero()).then(|| (t.to_string(), b))
                })
                .collect();
            AgentPayout { agent: agent.clone(), claims, c_per_tranche, final_balances }
        })
        .collect()
}

fn liquidity(world: &World) -> Vec<LpOutcome> {
    world
        .positions()
        .iter()
        .map(|((agent, pool), pos)| LpOutcome {
            agent: agent.clone(),
            pool: pool.clone(),
            deposited0: pos.deposited0,
            deposited1: pos.deposited1,
            withdrawn0: pos.withdrawn0,
            withdrawn1: pos.withdrawn1,
            hold_value: pos.hold_value,
            lp_value: pos.lp_value,
            divergence_loss: pos.divergence_loss(),
        })
        .collect()
}

fn policy_summary(world: &World) -> PolicySummary {
    let policy = world.policy();
    let ledger = world.ledger();
    let residual = [TokenId::C, TokenId::Cx, TokenId::Cy, TokenId::A, TokenId::B]
        .into_iter()
        .filter_map(|t| {
            let b = ledger.balance_of(&t, &policy.account()).unwrap_or(Amount::ZERO);
            (!b.is_zero()).then(|| (t.to_string(), b))
        })
        .collect();
    PolicySummary {
        final_state: world.state(),
        is_invested: policy.is_invested(),
        in_liquid_mode: policy.in_liquid_mode(),
        tranches_issued: policy.tranches_issued(),
        c_invested: policy.c_invested(),
        c_redeemed: policy.c_redeemed(),
        redeemed_x: policy.redeemed_from(VenueId::X),
        redeemed_y: policy.redeemed_from(VenueId::Y),
        interest: policy.interest(),
        liquid_payouts: policy.liquid_payouts().copied(),
        fallback_ratios: policy.fallback_ratios().copied(),
        residual,
    }
}

/// One row of the payouts CSV.
#[derive(Debug, Clone, Serialize)]
pub struct PayoutRow {
    pub agent: String,
    pub a_claimed: Amount,
    pub b_claimed: Amount,
    pub c_received: Amount,
    pub cx_received: Amount,
    pub cy_received: Amount,
    pub c_per_tranche: Option<Amount>,
    pub per_a: Option<Amount>,
    pub per_b: Option<Amount>,
    pub cx_payout: Option<Amount>,
    pub cy_payout: Option<Amount>,
}

/// One row of the state timeline CSV.
#[derive(Debug, Clone, Serialize)]
pub struct StateRow {
    pub time: u64,
    pub state: PolicyState,
    pub exchange_rate_x: Amount,
    pub exchange_rate_y: Amount,
    pub liquid_x: bool,
    pub liquid_y: bool,
    pub c_supply: Amount,
}

/// One row of the pool price CSV.
#[derive(Debug, Clone, Serialize)]
pub struct PriceRow {
    pub time: u64,
    pub pool: String,
    pub reserve0: Amount,
    pub reserve1: Amount,
    pub price: Option<f64>,
}

impl RunReport {
    pub fn payout_rows(&self) -> Vec<PayoutRow> {
        let lp = self.policy.liquid_payouts;
        let fb = self.policy.fallback_ratios;
        self.payouts
            .iter()
            .map(|p| PayoutRow {
                agent: p.agent.clone(),
                a_claimed: p.claims.a_burned,
                b_claimed: p.claims.b_burned,
                c_received: p.claims.c_received,
                cx_received: p.claims.cx_received,
                cy_received: p.claims.cy_received,
                c_per_tranche: p.c_per_tranche,
                per_a: lp.map(|l| l.per_a),
                per_b: lp.map(|l| l.per_b),
                cx_payout: fb.map(|f| f.cx_payout),
                cy_payout: fb.map(|f| f.cy_payout),
            })
            .collect()
    }

    pub fn state_rows(&self) -> Vec<StateRow> {
        self.snapshots
            .iter()
            .map(|s| StateRow {
                time: s.time,
                state: s.state,
                exchange_rate_x: s.venues[0].exchange_rate,
                exchange_rate_y: s.venues[1].exchange_rate,
                liquid_x: s.venues[0].liquid,
                liquid_y: s.venues[1].liquid,
                c_supply: s.c_supply,
            })
            .collect()
    }

    pub fn price_rows(&self) -> Vec<PriceRow> {
        self.snapshots
            .iter()
            .flat_map(|s| {
                s.pools.iter().map(move |p| PriceRow {
                    time: s.time,
                    pool: p.id.clone(),
                    reserve0: p.reserve0,
                    reserve1: p.reserve1,
                    price: p.price,
                })
            })
            .collect()
    }
}
