pub mod amm;
pub mod fixed;
pub mod insurance;
pub mod ledger;
pub mod scalar;
pub mod scenario;
pub mod sweep;
pub mod venues;

pub use fixed::Amount;

/// Pool price in double precision.
pub type Price = amm::PriceRatio<f64>;
/// Pool price in single precision.
pub type Price32 = amm::PriceRatio<f32>;
