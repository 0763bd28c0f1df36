use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::EpisodeRecord;
use crate::seeding::TaskRng;

/// Day gap between consecutive claims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapModel {
    Constant(i64),
    /// Uniform draw from observed gaps.
    Empirical(Vec<i64>),
}

impl GapModel {
    /// Gaps between consecutive claim start days (in claim order, floored at
    /// zero) and from the last claim to the end of the episode.
    pub fn from_episodes(episodes: &[EpisodeRecord]) -> Self {
        let mut gaps = Vec::new();
        for ep in episodes {
            for pair in ep.claims.windows(2) {
                gaps.push((pair[1].claim_start_day - pair[0].claim_start_day).max(0));
            }
            if let Some(last) = ep.claims.last() {
                gaps.push((ep.end_day - last.claim_start_day).max(0));
            }
        }
        if gaps.is_empty() {
            GapModel::Constant(1)
        } else {
            GapModel::Empirical(gaps)
        }
    }

    pub fn sample(&self, rng: &mut TaskRng) -> i64 {
        match self {
            GapModel::Constant(g) => *g,
            GapModel::Empirical(gaps) => gaps[rng.random_range(0..gaps.len())],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            GapModel::Constant(g) => *g as f64,
            GapModel::Empirical(gaps) => gaps.iter().sum::<i64>() as f64 / gaps.len() as f64,
        }
    }
}
