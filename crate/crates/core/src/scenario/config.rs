//! Scenario files: TOML schema, typed form and validation.
//!
//! Parsing happens in two layers. The file layer mirrors the TOML document and
//! rejects unknown keys; the typed layer is what the simulator consumes and
//! what gets hashed into reports. Every diagnostic carries a field path such as
//! `agents[1].actions[0].amount`.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amm::DEFAULT_FEE;
use crate::fixed::Amount;
use crate::insurance::PeriodConfig;
use crate::ledger::{TokenId, VenueId};

/// Longest accepted axis or schedule; guards against runaway configs.
pub const MAX_GENERATED: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Deserializes TOML, reporting the path of the first offending field.
pub fn from_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, Diagnostic> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().message().trim().to_string();
        Diagnostic::new(if path == "." { String::new() } else { path }, message)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VenueEvent {
    /// Writes off `fraction` of the venue's value.
    Loss { time: u64, fraction: Amount },
    /// Opens or closes withdrawals and deposits.
    Liquidity { time: u64, liquid: bool },
}

impl VenueEvent {
    pub fn time(&self) -> u64 {
        match self {
            VenueEvent::Loss { time, .. } | VenueEvent::Liquidity { time, .. } => *time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VenueSpec {
    pub id: VenueId,
    pub rate_per_step: Amount,
    #[serde(default)]
    pub events: Vec<VenueEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolSpec {
    pub id: String,
    pub token0: TokenId,
    pub token1: TokenId,
    pub fee: Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolOp {
    Invest,
    Divest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolAction {
    pub time: u64,
    pub action: ProtocolOp,
}

/// One scripted step an agent takes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    SplitRisk { amount: Amount },
    Invest,
    Divest,
    Claim { a: Amount, b: Amount },
    ClaimAll,
    ClaimA { x: Amount, y: Amount },
    ClaimB { x: Amount, y: Amount },
    Swap { pool: String, token_in: TokenId, amount: Amount },
    AddLiquidity { pool: String, amount0: Amount, amount1: Amount },
    /// Burns `shares`, or the whole position when `None`.
    RemoveLiquidity { pool: String, shares: Option<Amount> },
    /// `to` is an agent id or `insurance`.
    Transfer { token: TokenId, to: String, amount: Amount },
    AtomicInsure { amount: Amount, pool: String, max_slippage: Option<Amount> },
}

impl Action {
    pub fn pool(&self) -> Option<&str> {
        match self {
            Action::Swap { pool, .. }
            | Action::AddLiquidity { pool, .. }
            | Action::RemoveLiquidity { pool, .. }
            | Action::AtomicInsure { pool, .. } => Some(pool),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimedAction {
    pub time: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentSpec {
    pub id: String,
    pub initial_c: Amount,
    pub actions: Vec<TimedAction>,
}

/// Swaps drawn from the scenario seed and appended to an agent's script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSwaps {
    pub agent: String,
    pub pool: String,
    pub count: u64,
    pub start: u64,
    pub end: u64,
    pub max_amount: Amount,
}

/// A validated-shape scenario. Call [`Scenario::validate`] before running.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Scenario {
    pub horizon: u64,
    pub seed: u64,
    /// Unwind liquidity and claim for every agent once the horizon is reached.
    pub settle_at_horizon: bool,
    pub period: PeriodConfig,
    pub venues: Vec<VenueSpec>,
    pub pools: Vec<PoolSpec>,
    pub agents: Vec<AgentSpec>,
    pub protocol_actions: Vec<ProtocolAction>,
    pub random_swaps: Vec<RandomSwaps>,
}

// File layer.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    horizon: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_true")]
    settle_at_horizon: bool,
    period: PeriodConfig,
    #[serde(default)]
    venues: Vec<VenueSpec>,
    #[serde(default)]
    pools: Vec<PoolFile>,
    #[serde(default)]
    agents: Vec<AgentFile>,
    #[serde(default)]
    protocol_actions: Vec<ProtocolAction>,
    #[serde(default)]
    random_swaps: Vec<RandomSwaps>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    id: String,
    token0: TokenId,
    token1: TokenId,
    fee: Option<Amount>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: String,
    #[serde(default)]
    initial_c: Amount,
    #[serde(default)]
    actions: Vec<ActionFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActionKind {
    SplitRisk,
    Invest,
    Divest,
    Claim,
    ClaimAll,
    ClaimA,
    ClaimB,
    Swap,
    AddLiquidity,
    RemoveLiquidity,
    Transfer,
    AtomicInsure,
}

/// Flat action table; which keys are required depends on `action`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionFile {
    time: u64,
    action: ActionKind,
    amount: Option<Amount>,
    a: Option<Amount>,
    b: Option<Amount>,
    x: Option<Amount>,
    y: Option<Amount>,
    pool: Option<String>,
    token_in: Option<TokenId>,
    amount0: Option<Amount>,
    amount1: Option<Amount>,
    shares: Option<Amount>,
    token: Option<TokenId>,
    to: Option<String>,
    max_slippage: Option<Amount>,
}

impl ActionFile {
    fn present(&self) -> Vec<&'static str> {
        let flags = [
            ("amount", self.amount.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("x", self.x.is_some()),
            ("y", self.y.is_some()),
            ("pool", self.pool.is_some()),
            ("token_in", self.token_in.is_some()),
            ("amount0", self.amount0.is_some()),
            ("amount1", self.amount1.is_some()),
            ("shares", self.shares.is_some()),
            ("token", self.token.is_some()),
            ("to", self.to.is_some()),
            ("max_slippage", self.max_slippage.is_some()),
        ];
        flags.into_iter().filter(|(_, p)| *p).map(|(k, _)| k).collect()
    }

    /// Converts to a typed action, or reports missing and stray keys.
    fn into_action(self, path: &str, diags: &mut Vec<Diagnostic>) -> Option<TimedAction> {
        use ActionKind as K;
        let (required, optional): (&[&str], &[&str]) = match self.action {
            K::SplitRisk => (&["amount"], &[]),
            K::Invest | K::Divest | K::ClaimAll => (&[], &[]),
            K::Claim => (&[], &["a", "b"]),
            K::ClaimA | K::ClaimB => (&[], &["x", "y"]),
            K::Swap => (&["pool", "token_in", "amount"], &[]),
            K::AddLiquidity => (&["pool", "amount0", "amount1"], &[]),
            K::RemoveLiquidity => (&["pool"], &["shares"]),
            K::Transfer => (&["token", "to", "amount"], &[]),
            K::AtomicInsure => (&["amount", "pool"], &["max_slippage"]),
        };
        let present = self.present();
        let before = diags.len();
        for key in required {
            if !present.contains(key) {
                diags.push(Diagnostic::new(format!("{path}.{key}"), format!("required by action {:?}", self.action)));
            }
        }
        for key in &present {
            if !required.contains(key) && !optional.contains(key) {
                diags.push(Diagnostic::new(format!("{path}.{key}"), format!("not used by action {:?}", self.action)));
            }
        }
        if diags.len() > before {
            return None;
        }
        let z = Amount::ZERO;
        let action = match self.action {
            K::SplitRisk => Action::SplitRisk { amount: self.amount? },
            K::Invest => Action::Invest,
            K::Divest => Action::Divest,
            K::Claim => Action::Claim { a: self.a.unwrap_or(z), b: self.b.unwrap_or(z) },
            K::ClaimAll => Action::ClaimAll,
            K::ClaimA => Action::ClaimA { x: self.x.unwrap_or(z), y: self.y.unwrap_or(z) },
            K::ClaimB => Action::ClaimB { x: self.x.unwrap_or(z), y: self.y.unwrap_or(z) },
            K::Swap => Action::Swap { pool: self.pool?, token_in: self.token_in?, amount: self.amount? },
            K::AddLiquidity => Action::AddLiquidity { pool: self.pool?, amount0: self.amount0?, amount1: self.amount1? },
            K::RemoveLiquidity => Action::RemoveLiquidity { pool: self.pool?, shares: self.shares },
            K::Transfer => Action::Transfer { token: self.token?, to: self.to?, amount: self.amount? },
            K::AtomicInsure => {
                Action::AtomicInsure { amount: self.amount?, pool: self.pool?, max_slippage: self.max_slippage }
            }
        };
        Some(TimedAction { time: self.time, action })
    }
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Scenario, Vec<Diagnostic>> {
        let file: ScenarioFile = from_toml(text).map_err(|d| vec![d])?;
        let mut diags = Vec::new();
        let mut agents = Vec::new();
        for (i, agent) in file.agents.into_iter().enumerate() {
            let mut actions = Vec::new();
            for (j, action) in agent.actions.into_iter().enumerate() {
                if let Some(a) = action.into_action(&format!("agents[{i}].actions[{j}]"), &mut diags) {
                    actions.push(a);
                }
            }
            agents.push(AgentSpec { id: agent.id, initial_c: agent.initial_c, actions });
        }
        let scenario = Scenario {
            horizon: file.horizon,
            seed: file.seed,
            settle_at_horizon: file.settle_at_horizon,
            period: file.period,
            venues: file.venues,
            pools: file
                .pools
                .into_iter()
                .map(|p| PoolSpec { id: p.id, token0: p.token0, token1: p.token1, fee: p.fee.unwrap_or(DEFAULT_FEE) })
                .collect(),
            agents,
            protocol_actions: file.protocol_actions,
            random_swaps: file.random_swaps,
        };
        diags.extend(scenario.validate());
        if diags.is_empty() {
            Ok(scenario)
        } else {
            Err(diags)
        }
    }

    /// Semantic checks that the schema cannot express.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let p = &self.period;
        if p.validate().is_err() {
            d.push(Diagnostic::new(
                "period",
                format!(
                    "timestamps must satisfy deploy <= start < t1 < t2 < t3, got deploy={} start={} t1={} t2={} t3={}",
                    p.deploy, p.start, p.t1, p.t2, p.t3
                ),
            ));
        }
        if self.horizon < p.deploy {
            d.push(Diagnostic::new("horizon", format!("must not precede deployment time {}", p.deploy)));
        }
        let in_window = |t: u64| t >= p.deploy && t <= self.horizon;
        let window = format!("[{}, {}]", p.deploy, self.horizon);

        let mut seen_venues = BTreeSet::new();
        for (i, v) in self.venues.iter().enumerate() {
            if !seen_venues.insert(v.id) {
                d.push(Diagnostic::new(format!("venues[{i}].id"), format!("venue {} declared twice", v.id)));
            }
            for (j, e) in v.events.iter().enumerate() {
                let path = format!("venues[{i}].events[{j}]");
                if !in_window(e.time()) {
                    d.push(Diagnostic::new(format!("{path}.time"), format!("outside {window}")));
                }
                if let VenueEvent::Loss { fraction, .. } = e {
                    if *fraction > Amount::ONE {
                        d.push(Diagnostic::new(format!("{path}.fraction"), "loss fraction must lie in [0, 1]"));
                    }
                }
            }
        }

        let mut pool_ids = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        for (i, pool) in self.pools.iter().enumerate() {
            let path = format!("pools[{i}]");
            if !valid_id(&pool.id) {
                d.push(Diagnostic::new(format!("{path}.id"), "ids use letters, digits, '_' or '-'"));
            }
            if !pool_ids.insert(pool.id.as_str()) {
                d.push(Diagnostic::new(format!("{path}.id"), format!("pool id `{}` declared twice", pool.id)));
            }
            for (key, token) in [("token0", &pool.token0), ("token1", &pool.token1)] {
                if matches!(token, TokenId::Lp(_)) {
                    d.push(Diagnostic::new(format!("{path}.{key}"), "pools trade C, Cx, Cy, A or B"));
                }
            }
            if pool.token0 == pool.token1 {
                d.push(Diagnostic::new(format!("{path}.token1"), "pool pairs a token with itself"));
            }
            let pair = if pool.token0 <= pool.token1 {
                (pool.token0.clone(), pool.token1.clone())
            } else {
                (pool.token1.clone(), pool.token0.clone())
            };
            if !pairs.insert(pair) {
                d.push(Diagnostic::new(
                    path.clone(),
                    format!("duplicate pool pair {}/{}", pool.token0, pool.token1),
                ));
            }
            if pool.fee >= Amount::ONE {
                d.push(Diagnostic::new(format!("{path}.fee"), "fee must be below 1"));
            }
        }

        let mut agent_ids = BTreeSet::new();
        for (i, agent) in self.agents.iter().enumerate() {
            if !valid_id(&agent.id) {
                d.push(Diagnostic::new(format!("agents[{i}].id"), "ids use letters, digits, '_' or '-'"));
            }
            if agent.id == "insurance" || !agent_ids.insert(agent.id.as_str()) {
                d.push(Diagnostic::new(format!("agents[{i}].id"), format!("agent id `{}` is taken", agent.id)));
            }
        }
        for (i, agent) in self.agents.iter().enumerate() {
            for (j, ta) in agent.actions.iter().enumerate() {
                let path = format!("agents[{i}].actions[{j}]");
                if !in_window(ta.time) {
                    d.push(Diagnostic::new(format!("{path}.time"), format!("outside {window}")));
                }
                if let Some(pool) = ta.action.pool() {
                    if !pool_ids.contains(pool) {
                        d.push(Diagnostic::new(format!("{path}.pool"), format!("unknown pool `{pool}`")));
                    }
                }
                match &ta.action {
                    Action::Transfer { to, .. } if to != "insurance" && !agent_ids.contains(to.as_str()) => {
                        d.push(Diagnostic::new(format!("{path}.to"), format!("unknown agent `{to}`")));
                    }
                    Action::AtomicInsure { max_slippage: Some(s), .. } if *s > Amount::ONE => {
                        d.push(Diagnostic::new(format!("{path}.max_slippage"), "must lie in [0, 1]"));
                    }
                    _ => {}
                }
            }
        }
        for (i, pa) in self.protocol_actions.iter().enumerate() {
            if !in_window(pa.time) {
                d.push(Diagnostic::new(format!("protocol_actions[{i}].time"), format!("outside {window}")));
            }
        }
        for (i, rs) in self.random_swaps.iter().enumerate() {
            let path = format!("random_swaps[{i}]");
            if !agent_ids.contains(rs.agent.as_str()) {
                d.push(Diagnostic::new(format!("{path}.agent"), format!("unknown agent `{}`", rs.agent)));
            }
            if !pool_ids.contains(rs.pool.as_str()) {
                d.push(Diagnostic::new(format!("{path}.pool"), format!("unknown pool `{}`", rs.pool)));
            }
            if rs.start > rs.end || !in_window(rs.start) || !in_window(rs.end) {
                d.push(Diagnostic::new(format!("{path}.end"), format!("need start <= end within {window}")));
            }
            if rs.count > MAX_GENERATED {
                d.push(Diagnostic::new(format!("{path}.count"), format!("at most {MAX_GENERATED}")));
            }
            if rs.max_amount.is_zero() {
                d.push(Diagnostic::new(format!("{path}.max_amount"), "must be positive"));
            }
        }
        d
    }

    pub fn venue(&self, id: VenueId) -> Option<&VenueSpec> {
        self.venues.iter().find(|v| v.id == id)
    }

    /// Every agent's script with the seeded random swaps appended, in declaration order.
    pub fn expanded_actions(&self) -> Vec<Vec<TimedAction>> {
        let mut scripts: Vec<Vec<TimedAction>> = self.agents.iter().map(|a| a.actions.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for rs in &self.random_swaps {
            let Some(idx) = self.agents.iter().position(|a| a.id == rs.agent) else { continue };
            let Some(pool) = self.pools.iter().find(|p| p.id == rs.pool) else { continue };
            for _ in 0..rs.count {
                let time = rng.gen_range(rs.start..=rs.end);
                let token_in = if rng.gen::<bool>() { pool.token0.clone() } else { pool.token1.clone() };
                let amount = Amount::from_units(rng.gen_range(1..=rs.max_amount.units()));
                scripts[idx].push(TimedAction { time, action: Action::Swap { pool: pool.id.clone(), token_in, amount } });
            }
        }
        scripts
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
horizon = 40

[period]
deploy = 0
start = 10
t1 = 20
t2 = 30
t3 = 40

[[agents]]
id = "alice"
initial_c = "100"
actions = [{ time = 1, action = "split_risk", amount = "100" }]
"#;

    fn errors(text: &str) -> Vec<Diagnostic> {
        Scenario::from_toml_str(text).unwrap_err()
    }

    #[test]
    fn minimal_parses() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.agents[0].actions[0].action, Action::SplitRisk { amount: Amount::whole(100) });
        assert!(s.settle_at_horizon);
        assert!(s.venues.is_empty());
    }

    #[test]
    fn period_order_is_checked() {
        let d = errors(&MINIMAL.replace("start = 10", "start = 20"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "period");
        let d = errors(&MINIMAL.replace("t2 = 30", "t2 = 15"));
        assert_eq!(d[0].path, "period");
    }

    #[test]
    fn unknown_keys_are_rejected_with_paths() {
        let d = errors(&MINIMAL.replace("horizon = 40", "horizon = 40\ncolour = 1"));
        assert!(d[0].message.contains("unknown field `colour`"), "{d:?}");
        let d = errors(&MINIMAL.replace("amount = \"100\"", "amount = \"100\", pool = \"p\""));
        assert_eq!(d[0].path, "agents[0].actions[0].pool");
        let d = errors(&MINIMAL.replace("t3 = 40", "t3 = 40\nt4 = 50"));
        assert_eq!(d[0].path, "period.t4");
    }

    #[test]
    fn negative_and_oversized_losses_are_rejected() {
        let venue = "\n[[venues]]\nid = \"y\"\nrate_per_step = \"0\"\nevents = [{ kind = \"loss\", time = 5, fraction = \"FRAC\" }]\n";
        // tagged tables are buffered, so parse errors stop at the event
        let d = errors(&format!("{MINIMAL}{}", venue.replace("FRAC", "-0.5")));
        assert_eq!(d[0].path, "venues[0].events[0]");
        assert!(d[0].message.contains("negative"), "{d:?}");
        let d = errors(&format!("{MINIMAL}{}", venue.replace("FRAC", "1.5")));
        assert_eq!(d[0].path, "venues[0].events[0].fraction");
        assert!(Scenario::from_toml_str(&format!("{MINIMAL}{}", venue.replace("FRAC", "1"))).is_ok());
    }

    #[test]
    fn duplicate_pool_pair_is_rejected() {
        let pools = "\n[[pools]]\nid = \"p1\"\ntoken0 = \"A\"\ntoken1 = \"C\"\n\n[[pools]]\nid = \"p2\"\ntoken0 = \"C\"\ntoken1 = \"A\"\n";
        let d = errors(&format!("{MINIMAL}{pools}"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "pools[1]");
    }

    #[test]
    fn references_and_times_are_checked() {
        let extra = "\n[[agents]]\nid = \"bob\"\nactions = [\n  { time = 50, action = \"claim_all\" },\n  { time = 5, action = \"swap\", pool = \"nope\", token_in = \"A\", amount = \"1\" },\n  { time = 5, action = \"transfer\", token = \"A\", to = \"carol\", amount = \"1\" },\n  { time = 5, action = \"swap\", pool = \"nope\" },\n]\n";
        let d = errors(&format!("{MINIMAL}{extra}"));
        let paths: Vec<_> = d.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"agents[1].actions[0].time"), "{paths:?}");
        assert!(paths.contains(&"agents[1].actions[1].pool"));
        assert!(paths.contains(&"agents[1].actions[2].to"));
        assert!(paths.contains(&"agents[1].actions[3].token_in"));
        assert!(paths.contains(&"agents[1].actions[3].amount"));
    }

    #[test]
    fn random_swaps_are_seeded() {
        let text = format!(
            "{}\n[[pools]]\nid = \"p\"\ntoken0 = \"A\"\ntoken1 = \"C\"\n\n[[random_swaps]]\nagent = \"alice\"\npool = \"p\"\ncount = 5\nstart = 10\nend = 20\nmax_amount = \"2\"\n",
            MINIMAL.replace("horizon = 40", "horizon = 40\nseed = 9")
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        let a = s.expanded_actions();
        assert_eq!(a[0].len(), 6);
        assert_eq!(a, s.expanded_actions());
        let mut other = s.clone();
        other.seed = 10;
        assert_ne!(a, other.expanded_actions());
        for ta in &a[0][1..] {
            assert!((10..=20).contains(&ta.time));
        }
    }
}
