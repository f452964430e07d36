//! Parameter sweeps producing plot-ready tables.
//!
//! A sweep file names an axis range and exactly one of three sweep kinds:
//! `[divergence]`, `[payouts]` or `[scenario]`. Rows are computed in parallel
//! and returned in axis order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::amm::{divergence_loss, simulate_divergence, PriceRatio};
use crate::fixed::Amount;
use crate::insurance::{compute_liquid_payouts, interest_earned};
use crate::ledger::VenueId;
use crate::scenario::config::{from_toml, Diagnostic, VenueEvent, MAX_GENERATED};
use crate::scenario::{run, Scenario};

/// Oracle agreement required before a divergence row is emitted.
pub const ORACLE_ABS_TOL: f64 = 1e-12;
pub const ORACLE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub from: Amount,
    pub to: Amount,
    pub step: Amount,
}

impl Axis {
    pub fn values(&self) -> Vec<Amount> {
        let mut out = Vec::new();
        let mut v = self.from;
        while v <= self.to && (out.len() as u64) < MAX_GENERATED {
            out.push(v);
            match v.checked_add(self.step) {
                Ok(next) if !self.step.is_zero() => v = next,
                _ => break,
            }
        }
        out
    }

    fn validate(&self, d: &mut Vec<Diagnostic>) {
        if self.step.is_zero() {
            d.push(Diagnostic::new("axis.step", "must be positive"));
        }
        if self.from > self.to {
            d.push(Diagnostic::new("axis", "range is empty: from > to"));
        }
        if !self.step.is_zero() && self.from <= self.to {
            let n = (self.to - self.from).units() / self.step.units() + 1;
            if n > MAX_GENERATED as u128 {
                d.push(Diagnostic::new("axis.step", format!("range has {n} points, at most {MAX_GENERATED}")));
            }
        }
    }
}

/// Divergence loss of A/C and B/C pools as the terminal price `r` varies.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceSweep {
    /// Price of A in C when liquidity was provided.
    pub pa_start: Amount,
    /// Price of B in C when liquidity was provided.
    pub pb_start: Amount,
    /// Pool invariant used by the arbitrage cross-check.
    #[serde(default = "default_oracle_k")]
    pub oracle_k: Amount,
}

fn default_oracle_k() -> Amount {
    Amount::whole(1_000_000)
}

/// Liquid-mode payouts as the redeemed amount `C_T1` varies.
///
/// Venue x returns up to `c_invested / 2 * (1 + x_return)` and venue y the rest.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoutSweep {
    pub c_invested: Amount,
    #[serde(default)]
    pub x_return: Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioParameter {
    /// Every loss event of the venue.
    LossFraction,
    RatePerStep,
}

/// Full scenario runs as one venue parameter varies.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSweep {
    /// Scenario file, relative to the sweep file.
    pub template: PathBuf,
    pub parameter: ScenarioParameter,
    pub venue: VenueId,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    /// Output columns in order; defaults to all.
    pub columns: Option<Vec<String>>,
    pub divergence: Option<DivergenceSweep>,
    pub payouts: Option<PayoutSweep>,
    pub scenario: Option<ScenarioSweep>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep")]
    Invalid(Vec<Diagnostic>),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("at axis value {value}: {message}")]
    Runtime { value: Amount, message: String },
}

/// A header row plus data rows, all rendered as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

const DIVERGENCE_COLUMNS: &[&str] = &["r", "D_AC", "D_BC"];
const PAYOUT_COLUMNS: &[&str] = &["c_t1", "case", "interest", "a_total", "b_total", "per_a", "per_b"];
const SCENARIO_COLUMNS: &[&str] = &[
    "value",
    "final_state",
    "case",
    "per_a",
    "per_b",
    "cx_payout",
    "cy_payout",
    "c_supply",
    "conserved",
    "failed_actions",
    "scenario_hash",
];

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<SweepSpec, Vec<Diagnostic>> {
        let spec: SweepSpec = from_toml(text).map_err(|d| vec![d])?;
        let d = spec.validate();
        if d.is_empty() {
            Ok(spec)
        } else {
            Err(d)
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        self.axis.validate(&mut d);
        let kinds = [self.divergence.is_some(), self.payouts.is_some(), self.scenario.is_some()];
        if kinds.iter().filter(|k| **k).count() != 1 {
            d.push(Diagnostic::new("", "exactly one of [divergence], [payouts] or [scenario] is required"));
        }
        if let Some(div) = &self.divergence {
            for (key, v) in [("pa_start", div.pa_start), ("pb_start", div.pb_start), ("oracle_k", div.oracle_k)] {
                if v.is_zero() {
                    d.push(Diagnostic::new(format!("divergence.{key}"), "must be positive"));
                }
            }
            if self.axis.from.is_zero() {
                d.push(Diagnostic::new("axis.from", "price ratios must be positive"));
            }
        }
        if let Some(p) = &self.payouts {
            let cap = p.c_invested.mul_floor("1.2".parse().expect("literal")).unwrap_or(Amount::MAX);
            if self.axis.from.is_zero() || self.axis.to > cap {
                d.push(Diagnostic::new("axis", format!("C_T1 must lie in (0, {cap}]")));
            }
            if p.c_invested.is_zero() {
                d.push(Diagnostic::new("payouts.c_invested", "must be positive"));
            }
        }
        if let Some(s) = &self.scenario {
            if s.parameter == ScenarioParameter::LossFraction && self.axis.to > Amount::ONE {
                d.push(Diagnostic::new("axis.to", "loss fractions lie in [0, 1]"));
            }
        }
        if let Some(cols) = &self.columns {
            let known = self.all_columns();
            for (i, c) in cols.iter().enumerate() {
                if !known.contains(&c.as_str()) {
                    d.push(Diagnostic::new(format!("columns[{i}]"), format!("unknown column `{c}`, expected one of {known:?}")));
                }
            }
        }
        d
    }

    fn all_columns(&self) -> &'static [&'static str] {
        if self.divergence.is_some() {
            DIVERGENCE_COLUMNS
        } else if self.payouts.is_some() {
            PAYOUT_COLUMNS
        } else {
            SCENARIO_COLUMNS
        }
    }
}

/// Runs a validated sweep. `base_dir` resolves a scenario template path and
/// `seed`, if given, replaces the template's seed.
pub fn run_sweep(spec: &SweepSpec, base_dir: &Path, seed: Option<u64>) -> Result<Table, SweepError> {
    let d = spec.validate();
    if !d.is_empty() {
        return Err(SweepError::Invalid(d));
    }
    let values = spec.axis.values();
    let rows: Vec<Vec<String>> = if let Some(div) = &spec.divergence {
        values.par_iter().map(|v| divergence_row(div, *v)).collect::<Result<_, _>>()?
    } else if let Some(p) = &spec.payouts {
        values.par_iter().map(|v| payout_row(p, *v)).collect::<Result<_, _>>()?
    } else {
        let s = spec.scenario.as_ref().expect("validated");
        let path = base_dir.join(&s.template);
        let text = std::fs::read_to_string(&path).map_err(|source| SweepError::Io { path: path.clone(), source })?;
        let mut template = Scenario::from_toml_str(&text).map_err(|d| {
            SweepError::Invalid(
                d.into_iter()
                    .map(|x| Diagnostic::new(format!("scenario.template({}) {}", path.display(), x.path), x.message))
                    .collect(),
            )
        })?;
        if let Some(seed) = seed {
            template.seed = seed;
        }
        values.par_iter().map(|v| scenario_row(&template, s, *v)).collect::<Result<_, _>>()?
    };
    let all = spec.all_columns();
    let columns: Vec<String> = match &spec.columns {
        Some(c) => c.clone(),
        None => all.iter().map(|s| s.to_string()).collect(),
    };
    let idx: Vec<usize> = columns.iter().map(|c| all.iter().position(|a| a == c).expect("validated")).collect();
    let rows = rows.into_iter().map(|r| idx.iter().map(|i| r[*i].clone()).collect()).collect();
    Ok(Table { columns, rows })
}

fn divergence_row(spec: &DivergenceSweep, r: Amount) -> Result<Vec<String>, SweepError> {
    let runtime = |message: String| SweepError::Runtime { value: r, message };
    let price = |a: Amount| PriceRatio::new(a.to_f64()).map_err(|e| runtime(e.to_string()));
    let terminal = price(r)?;
    let mut row = vec![r.to_string()];
    for start in [spec.pa_start, spec.pb_start] {
        let start = price(start)?;
        let d = divergence_loss(start, terminal);
        let oracle = simulate_divergence(spec.oracle_k.to_f64(), start, terminal).map_err(|e| runtime(e.to_string()))?;
        if (oracle.loss - d).abs() > ORACLE_ABS_TOL + ORACLE_REL_TOL * d {
            return Err(runtime(format!("closed form {d} disagrees with arbitrage oracle {}", oracle.loss)));
        }
        row.push(d.to_string());
    }
    Ok(row)
}

fn payout_row(spec: &PayoutSweep, c_t1: Amount) -> Result<Vec<String>, SweepError> {
    let runtime = |message: String| SweepError::Runtime { value: c_t1, message };
    let c_s = spec.c_invested;
    let half = Amount::from_units(c_s.units() / 2);
    let x_cap = half.mul_floor(Amount::ONE.checked_add(spec.x_return).map_err(|e| runtime(e.to_string()))?)
        .map_err(|e| runtime(e.to_string()))?;
    let x = c_t1.min(x_cap);
    let y = c_t1 - x;
    let interest = interest_earned(c_s, &[x, y]);
    let n = half;
    let p = compute_liquid_payouts(c_s, c_t1, interest, n, n).map_err(|e| runtime(e.to_string()))?;
    Ok(vec![
        c_t1.to_string(),
        format!("{:?}", p.case),
        interest.to_string(),
        p.a_total.to_string(),
        p.b_total.to_string(),
        p.per_a.to_string(),
        p.per_b.to_string(),
    ])
}

fn scenario_row(template: &Scenario, spec: &ScenarioSweep, value: Amount) -> Result<Vec<String>, SweepError> {
    let runtime = |message: String| SweepError::Runtime { value, message };
    let mut scenario = template.clone();
    let venue = match scenario.venues.iter_mut().find(|v| v.id == spec.venue) {
        Some(v) => v,
        None => return Err(runtime(format!("template declares no venue {}", spec.venue))),
    };
    match spec.parameter {
        ScenarioParameter::RatePerStep => venue.rate_per_step = value,
        ScenarioParameter::LossFraction => {
            let mut found = false;
            for e in &mut venue.events {
                if let VenueEvent::Loss { fraction, .. } = e {
                    *fraction = value;
                    found = true;
                }
            }
            if !found {
                return Err(runtime(format!("venue {} has no loss event to vary", spec.venue)));
            }
        }
    }
    let report = run(&scenario).map_err(|d| runtime(d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")))?;
    let lp = report.policy.liquid_payouts;
    let fb = report.policy.fallback_ratios;
    let opt = |a: Option<Amount>| a.map(|a| a.to_string()).unwrap_or_default();
    Ok(vec![
        value.to_string(),
        report.policy.final_state.to_string(),
        lp.map(|l| format!("{:?}", l.case)).unwrap_or_default(),
        opt(lp.map(|l| l.per_a)),
        opt(lp.map(|l| l.per_b)),
        opt(fb.map(|f| f.cx_payout)),
        opt(fb.map(|f| f.cy_payout)),
        report.conservation.c_supply.to_string(),
        report.conservation.holds().to_string(),
        report.failures().count().to_string(),
        report.scenario_hash,
    ])
}
