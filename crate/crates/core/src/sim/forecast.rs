use serde::{Deserialize, Serialize};

use super::evaluate::StartDistribution;
use super::gap::GapModel;
use super::simulate::{Controller, Simulator};
use crate::error::{Error, Result};
use crate::ingest::{episode_states, Dictionaries, EpisodeRecord, StateId};
use crate::kernel::EmpiricalMdp;
use crate::seeding::task_rng;

/// Observed state of every episode by day since episode start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayOccupancy {
    /// Per episode: `(day, state)` per claim and the last clinical day.
    episodes: Vec<(Vec<(i64, StateId)>, i64)>,
}

impl DayOccupancy {
    pub fn from_episodes(episodes: &[EpisodeRecord], max_inpatient: usize, dict: &Dictionaries) -> Result<Self> {
        let episodes = episodes
            .iter()
            .filter(|ep| !ep.is_empty())
            .map(|ep| {
                let states = episode_states(ep, max_inpatient, dict)?;
                let marks = ep.claims.iter().zip(&states).map(|(c, s)| (c.claim_start_day - ep.start_day, *s)).collect();
                Ok((marks, ep.end_day - ep.start_day))
            })
            .collect::<Result<_>>()?;
        Ok(Self { episodes })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// State carried forward to `day`, TERMINAL after the episode ends.
    pub fn state_on(&self, episode: usize, day: i64) -> StateId {
        let (marks, end) = &self.episodes[episode];
        if day > *end {
            return StateId::Terminal;
        }
        let at = marks.partition_point(|&(d, _)| d <= day);
        marks[at.saturating_sub(1)].1
    }

    pub fn initial_states(&self) -> Vec<StateId> {
        self.episodes.iter().map(|(m, _)| m[0].1).collect()
    }

    /// States of episodes whose current diagnosis on `day` is `category`.
    pub fn states_with_category(&self, category: usize, day: i64) -> Vec<StateId> {
        (0..self.len()).map(|e| self.state_on(e, day)).filter(|s| s.diagnosis() == Some(category)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastCondition {
    State(StateId),
    /// Diagnosis category index; start states drawn from episodes carrying it on the start day.
    Category(usize),
    /// Empirical initial states.
    Initial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub start_day: i64,
    pub horizon_days: i64,
    pub n_traj: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub condition: ForecastCondition,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { start_day: 0, horizon_days: 120, n_traj: 10_000, seed: 0, max_steps: 200, condition: ForecastCondition::Initial }
    }
}

/// Per-day distribution over diagnosis categories, TERMINAL in the last column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastMatrix {
    pub start_day: i64,
    pub categories: usize,
    pub trajectories: usize,
    pub rows: Vec<Vec<f64>>,
}

impl ForecastMatrix {
    pub fn terminal_column(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[self.categories]).collect()
    }

    /// Header `day,<category labels>,TERMINAL`.
    pub fn to_csv(&self, labels: &[String]) -> Result<String> {
        if labels.len() != self.categories {
            return Err(Error::Dimension(format!("{} labels for {} categories", labels.len(), self.categories)));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["day".to_string()];
        header.extend(labels.iter().cloned());
        header.push("TERMINAL".into());
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![(self.start_day + i as i64).to_string()];
            rec.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Simulate `n_traj` day-stamped trajectories and tabulate the diagnosis
/// category on each day of `[start_day, start_day + horizon_days]`.
pub fn forecast_pathway(
    mdp: &EmpiricalMdp,
    controller: &Controller,
    cfg: &ForecastConfig,
    occupancy: Option<&DayOccupancy>,
    gaps: &GapModel,
) -> Result<ForecastMatrix> {
    if cfg.n_traj == 0 || cfg.horizon_days < 0 || cfg.max_steps == 0 {
        return Err(Error::Config("n_traj and max_steps must be positive and the horizon non-negative".into()));
    }
    let need = || occupancy.ok_or_else(|| Error::Precondition("conditioning needs observed episodes".into()));
    let start = match &cfg.condition {
        ForecastCondition::State(s) => StartDistribution::Empirical(vec![*s]),
        ForecastCondition::Category(c) => {
            let states = need()?.states_with_category(*c, cfg.start_day);
            if states.is_empty() {
                return Err(Error::EmptySupport(format!("no episode carries category {c} on day {}", cfg.start_day)));
            }
            StartDistribution::Empirical(states)
        }
        ForecastCondition::Initial => StartDistribution::Empirical(need()?.initial_states()),
    };
    let sim = Simulator::new(mdp, cfg.max_steps);
    sim.check_controller(controller)?;
    let start = start.resolve(&sim)?;
    let categories = mdp.space.diagnoses;
    let days = (cfg.horizon_days + 1) as usize;
    let mut counts = vec![vec![0u64; categories + 1]; days];
    let mut rng = task_rng(cfg.seed, &[]);
    for _ in 0..cfg.n_traj {
        let s0 = start.draw(&mut rng);
        let traj = sim.trajectory(controller, s0, cfg.start_day, gaps, &mut rng);
        let mut at = 0;
        for (offset, row) in counts.iter_mut().enumerate() {
            let day = cfg.start_day + offset as i64;
            let column = match traj.end_day {
                Some(end) if day >= end => categories,
                _ => {
                    while at + 1 < traj.steps.len() && traj.steps[at + 1].day <= day {
                        at += 1;
                    }
                    traj.steps[at].state.diagnosis().expect("steps are clinical")
                }
            };
            row[column] += 1;
        }
    }
    let n = cfg.n_traj as f64;
    let rows = counts.into_iter().map(|r| r.into_iter().map(|c| c as f64 / n).collect()).collect();
    Ok(ForecastMatrix { start_day: cfg.start_day, categories, trajectories: cfg.n_traj, rows })
}
