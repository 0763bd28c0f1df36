use rand::Rng;
use serde::{Deserialize, Serialize};

use super::simulate::{Controller, Simulator};
use super::PREMIUM_THRESHOLD;
use crate::error::{Error, Result};
use crate::ingest::StateId;
use crate::kernel::EmpiricalMdp;
use crate::seeding::{task_rng, TaskRng};

/// Cost above the repayment threshold.
pub fn episode_premium(cost: f64, threshold: f64) -> f64 {
    (cost - threshold).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartDistribution {
    /// Uniform over the listed states, duplicates included.
    Empirical(Vec<StateId>),
    Weighted(Vec<(StateId, f64)>),
}

impl StartDistribution {
    pub(crate) fn resolve(&self, sim: &Simulator) -> Result<ResolvedStart> {
        match self {
            StartDistribution::Empirical(states) => {
                if states.is_empty() {
                    return Err(Error::EmptySupport("no start states".into()));
                }
                Ok(ResolvedStart::Uniform(states.iter().map(|s| sim.index_of(s)).collect::<Result<_>>()?))
            }
            StartDistribution::Weighted(pairs) => {
                let mut acc = 0.0;
                let mut cdf = Vec::new();
                for (s, w) in pairs {
                    if !(*w >= 0.0 && w.is_finite()) {
                        return Err(Error::Config(format!("start weight {w} for {s}")));
                    }
                    if *w > 0.0 {
                        acc += w;
                        cdf.push((sim.index_of(s)?, acc));
                    }
                }
                if cdf.is_empty() {
                    return Err(Error::EmptySupport("start weights are all zero".into()));
                }
                Ok(ResolvedStart::Cdf(cdf))
            }
        }
    }
}

pub(crate) enum ResolvedStart {
    Uniform(Vec<usize>),
    Cdf(Vec<(usize, f64)>),
}

impl ResolvedStart {
    pub fn draw(&self, rng: &mut TaskRng) -> usize {
        match self {
            ResolvedStart::Uniform(s) => s[rng.random_range(0..s.len())],
            ResolvedStart::Cdf(cdf) => {
                let u = rng.random::<f64>() * cdf.last().expect("non-empty").1;
                let at = cdf.partition_point(|&(_, c)| c <= u);
                cdf[at.min(cdf.len() - 1)].0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub seed: u64,
    pub max_steps: usize,
    pub rollouts: usize,
    pub repeats: usize,
    pub premium_threshold: f64,
    pub workers: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { seed: 0, max_steps: 200, rollouts: 400, repeats: 500, premium_threshold: PREMIUM_THRESHOLD, workers: 1 }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rollouts == 0 || self.repeats == 0 || self.max_steps == 0 {
            return Err(Error::Config("rollouts, repeats and max_steps must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sums over one batch of rollouts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub episodes: u64,
    pub cost_sum: f64,
    pub cost_sq_sum: f64,
    pub premium_sum: f64,
    pub truncated: u64,
}

impl BatchSummary {
    pub fn push(&mut self, cost: f64, premium: f64, truncated: bool) {
        self.episodes += 1;
        self.cost_sum += cost;
        self.cost_sq_sum += cost * cost;
        self.premium_sum += premium;
        self.truncated += u64::from(truncated);
    }

    pub fn mean_cost(&self) -> f64 {
        self.cost_sum / self.episodes as f64
    }

    pub fn mean_premium(&self) -> f64 {
        self.premium_sum / self.episodes as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub mean_cost: f64,
    /// Standard deviation of single-episode costs.
    pub std_cost: f64,
    pub mean_premium: f64,
    pub cost_ci: f64,
    pub premium_ci: f64,
    pub repeats: usize,
    pub episodes: u64,
    pub truncated: u64,
    pub warning: Option<String>,
}

fn mean_and_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

impl EpisodeStats {
    /// Grand mean over batches, CI from the spread of batch means.
    pub fn from_batches(batches: &[BatchSummary]) -> Self {
        let batches: Vec<&BatchSummary> = batches.iter().filter(|b| b.episodes > 0).collect();
        if batches.is_empty() {
            return Self {
                mean_cost: 0.0,
                std_cost: 0.0,
                mean_premium: 0.0,
                cost_ci: 0.0,
                premium_ci: 0.0,
                repeats: 0,
                episodes: 0,
                truncated: 0,
                warning: None,
            };
        }
        let costs: Vec<f64> = batches.iter().map(|b| b.mean_cost()).collect();
        let premiums: Vec<f64> = batches.iter().map(|b| b.mean_premium()).collect();
        let (mean_cost, cost_ci) = mean_and_half_width(&costs);
        let (mean_premium, premium_ci) = mean_and_half_width(&premiums);
        let episodes: u64 = batches.iter().map(|b| b.episodes).sum();
        let truncated: u64 = batches.iter().map(|b| b.truncated).sum();
        let sum: f64 = batches.iter().map(|b| b.cost_sum).sum();
        let sq: f64 = batches.iter().map(|b| b.cost_sq_sum).sum();
        let n = episodes as f64;
        let std_cost = if episodes > 1 { ((sq - sum * sum / n) / (n - 1.0)).max(0.0).sqrt() } else { 0.0 };
        let rate = truncated as f64 / n;
        let warning = (rate > 0.01).then(|| {
            format!("{:.2}% of simulated episodes hit the step limit; the model may be improper", 100.0 * rate)
        });
        Self {
            mean_cost,
            std_cost,
            mean_premium,
            cost_ci,
            premium_ci,
            repeats: batches.len(),
            episodes,
            truncated,
            warning,
        }
    }
}

impl Simulator {
    pub(crate) fn batch(
        &self,
        controller: &Controller,
        start: &ResolvedStart,
        rollouts: usize,
        threshold: f64,
        rng: &mut TaskRng,
    ) -> BatchSummary {
        let mut summary = BatchSummary::default();
        for _ in 0..rollouts {
            let s = start.draw(rng);
            let (cost, truncated) = self.rollout_cost(controller, s, rng);
            summary.push(cost, episode_premium(cost, threshold), truncated);
        }
        summary
    }

    /// `repeats` batches of `rollouts` episodes, batch `b` seeded from `(seed, b)`.
    pub fn evaluate(&self, controller: &Controller, start: &StartDistribution, cfg: &RolloutConfig) -> Result<EpisodeStats> {
        cfg.validate()?;
        self.check_controller(controller)?;
        let start = start.resolve(self)?;
        let run = |b: usize| {
            let mut rng = task_rng(cfg.seed, &[b as u64]);
            self.batch(controller, &start, cfg.rollouts, cfg.premium_threshold, &mut rng)
        };
        let batches: Vec<BatchSummary> = if cfg.workers <= 1 {
            (0..cfg.repeats).map(run).collect()
        } else {
            let mut out = vec![BatchSummary::default(); cfg.repeats];
            let chunk = cfg.repeats.div_ceil(cfg.workers);
            std::thread::scope(|scope| {
                for (w, slot) in out.chunks_mut(chunk).enumerate() {
                    let run = &run;
                    scope.spawn(move || {
                        for (i, b) in slot.iter_mut().enumerate() {
                            *b = run(w * chunk + i);
                        }
                    });
                }
            });
            out
        };
        Ok(EpisodeStats::from_batches(&batches))
    }
}

/// Monte-Carlo cost and premium statistics of `controller` on `mdp`.
pub fn evaluate_policy(
    mdp: &EmpiricalMdp,
    controller: &Controller,
    start: &StartDistribution,
    cfg: &RolloutConfig,
) -> Result<EpisodeStats> {
    Simulator::new(mdp, cfg.max_steps).evaluate(controller, start, cfg)
}

#[cfg(test)]
mod tests {
    use super::super::simulate::tests::{chain, mdp};
    use super::*;

    #[test]
    fn premium_spot_values() {
        assert_eq!(episode_premium(30_000.0, PREMIUM_THRESHOLD), 4435.0);
        assert_eq!(episode_premium(25_565.0, PREMIUM_THRESHOLD), 0.0);
        assert_eq!(episode_premium(20_000.0, PREMIUM_THRESHOLD), 0.0);
    }

    #[test]
    fn deterministic_model_has_zero_width() {
        let cfg = RolloutConfig { repeats: 20, rollouts: 10, ..RolloutConfig::default() };
        let start = StartDistribution::Empirical(vec![StateId::clinical(0, 0)]);
        let stats = evaluate_policy(&chain(), &Controller::Table(vec![0; 3]), &start, &cfg).unwrap();
        assert_eq!(stats.mean_cost, 5.0);
        assert_eq!(stats.cost_ci, 0.0);
        assert_eq!(stats.std_cost, 0.0);
        assert_eq!(stats.episodes, 200);
        assert!(stats.warning.is_none());
    }

    #[test]
    fn workers_do_not_change_results() {
        let m = mdp(
            &[vec![vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4], vec![0.0, 0.0, 1.0]]],
            &[vec![20_000.0], vec![9_000.0], vec![0.0]],
        );
        let start = StartDistribution::Weighted(vec![(StateId::clinical(0, 0), 1.0), (StateId::clinical(1, 0), 3.0)]);
        let cfg = RolloutConfig { repeats: 13, rollouts: 50, seed: 4, ..RolloutConfig::default() };
        let one = evaluate_policy(&m, &Controller::Table(vec![0; 3]), &start, &cfg).unwrap();
        let four = evaluate_policy(&m, &Controller::Table(vec![0; 3]), &start, &RolloutConfig { workers: 4, ..cfg }).unwrap();
        assert_eq!(one, four);
        assert!(one.mean_premium <= one.mean_cost && one.cost_ci > 0.0);
    }

    #[test]
    fn truncation_warning() {
        let m = mdp(&[vec![vec![1.0, 0.0], vec![0.0, 1.0]]], &[vec![1.0], vec![0.0]]);
        let cfg = RolloutConfig { repeats: 2, rollouts: 5, max_steps: 5, ..RolloutConfig::default() };
        let start = StartDistribution::Empirical(vec![StateId::clinical(0, 0)]);
        let stats = evaluate_policy(&m, &Controller::Table(vec![0; 2]), &start, &cfg).unwrap();
        assert_eq!(stats.truncated, 10);
        assert!(stats.warning.is_some());
    }
}
