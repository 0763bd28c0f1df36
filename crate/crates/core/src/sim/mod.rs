//! Monte-Carlo evaluation, cross-validation and pathway forecasting.

mod cv;
mod evaluate;
mod forecast;
mod gap;
mod histogram;
mod simulate;

pub use cv::{cross_validate, CvConfig, CvEntry, CvReport};
pub use evaluate::{episode_premium, evaluate_policy, BatchSummary, EpisodeStats, RolloutConfig, StartDistribution};
pub use forecast::{forecast_pathway, DayOccupancy, ForecastCondition, ForecastConfig, ForecastMatrix};
pub use gap::GapModel;
pub use histogram::{export_histogram, Histogram};
pub use simulate::{rollouts_performed, simulate_episode, Controller, Simulator, Step, Trajectory};

/// Default premium threshold in USD.
pub const PREMIUM_THRESHOLD: f64 = 25_565.0;
