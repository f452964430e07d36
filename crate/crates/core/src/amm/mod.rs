//! Constant-product market: closed-form analytics and an integer engine.

pub mod analytics;
pub mod arbitrage;
pub mod pool;

pub use analytics::{
    divergence_loss, divergence_loss_at, hold_value, hold_value_from_entry, lp_value, post_trade_reserves, spot_price,
    AnalyticsError, PriceRatio,
};
pub use arbitrage::{simulate_divergence, DivergenceOutcome, SimulationError};
pub use pool::{Pool, PoolError, DEFAULT_FEE};
