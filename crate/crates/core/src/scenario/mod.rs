//! Scenario-driven simulation.

pub mod config;
pub mod report;
pub mod world;

pub use config::{
    Action, AgentSpec, Diagnostic, PoolSpec, ProtocolAction, ProtocolOp, RandomSwaps, Scenario, TimedAction, VenueEvent,
    VenueSpec,
};
pub use report::{run, scenario_hash, RunReport, TOOL_VERSION};
pub use world::{ActionError, InsureReceipt, World};
