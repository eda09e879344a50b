//! Proper scoring rules and forecast comparison statistics.

mod crps;
mod dm;
pub mod normal;

pub use crps::{crps_ensemble, crps_gaussian, crps_gaussian_grad, crps_numeric, crpss, GaussianForecast};
pub use dm::{dm_test, DmTest, ScoreSeries};
