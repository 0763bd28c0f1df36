use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::Serialize;

use super::gap::GapModel;
use crate::error::{Error, Result};
use crate::ingest::{StateId, StateSpace};
use crate::kernel::EmpiricalMdp;
use crate::seeding::TaskRng;
use crate::solver::GroupPolicy;

static ROLLOUTS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of Monte-Carlo rollouts run by [`Simulator`] so far.
pub fn rollouts_performed() -> u64 {
    ROLLOUTS.load(Ordering::Relaxed)
}

/// Chooses the group to follow at each step.
#[derive(Clone, Debug, PartialEq)]
pub enum Controller {
    /// Fixed group per MDP state index.
    Table(Vec<usize>),
    /// Behavior policy: one group drawn uniformly per episode, then followed throughout.
    EpisodeUniform { groups: usize },
}

impl Controller {
    pub fn from_policy(policy: &GroupPolicy, mdp: &EmpiricalMdp) -> Result<Self> {
        let table: Vec<usize> = mdp.states.iter().map(|s| policy.action(s)).collect();
        if let Some(&a) = table.iter().find(|&&a| a >= mdp.actions) {
            return Err(Error::Dimension(format!("policy uses group {a} but the MDP has {}", mdp.actions)));
        }
        Ok(Controller::Table(table))
    }

    pub fn behavior(groups: usize) -> Self {
        Controller::EpisodeUniform { groups }
    }

    fn fixed_group(&self, rng: &mut TaskRng) -> Option<usize> {
        match self {
            Controller::Table(_) => None,
            Controller::EpisodeUniform { groups } => Some(rng.random_range(0..*groups)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub state: StateId,
    pub day: i64,
    pub action: usize,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub total_cost: f64,
    pub truncated: bool,
    /// Day TERMINAL was entered, if it was.
    pub end_day: Option<i64>,
}

/// MDP prepared for sampling: cumulative sparse rows per (action, state).
#[derive(Clone, Debug)]
pub struct Simulator {
    pub states: Vec<StateId>,
    pub max_steps: usize,
    space: StateSpace,
    index: Vec<Option<usize>>,
    n: usize,
    actions: usize,
    cdf: Vec<Vec<(usize, f64)>>,
    costs: Vec<f64>,
    terminal: Option<usize>,
}

impl Simulator {
    pub fn new(mdp: &EmpiricalMdp, max_steps: usize) -> Self {
        let cdf = mdp
            .sparse_rows()
            .into_iter()
            .map(|row| {
                let mut acc = 0.0;
                row.into_iter()
                    .map(|(j, p)| {
                        acc += p;
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        let n = mdp.len();
        let costs = (0..n).flat_map(|i| (0..mdp.actions).map(move |a| (i, a))).map(|(i, a)| mdp.cost(i, a)).collect();
        let space = mdp.space;
        let index = space.states().iter().map(|s| mdp.index_of(s)).collect();
        Self {
            states: mdp.states.clone(),
            max_steps,
            space,
            index,
            n,
            actions: mdp.actions,
            cdf,
            costs,
            terminal: mdp.terminal(),
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn index_of(&self, state: &StateId) -> Result<usize> {
        self.space
            .index(state)
            .and_then(|i| self.index[i])
            .ok_or_else(|| Error::Lookup(format!("state {state} is not in the model")))
    }

    pub fn check_controller(&self, controller: &Controller) -> Result<()> {
        match controller {
            Controller::Table(t) if t.len() != self.n => {
                Err(Error::Dimension(format!("action table has {} entries for {} states", t.len(), self.n)))
            }
            Controller::Table(t) if t.iter().any(|&a| a >= self.actions) => {
                Err(Error::Dimension("action table refers to a missing group".into()))
            }
            Controller::EpisodeUniform { groups } if *groups == 0 || *groups > self.actions => {
                Err(Error::Dimension(format!("behavior over {groups} groups with {} actions", self.actions)))
            }
            _ => Ok(()),
        }
    }

    fn next(&self, state: usize, action: usize, rng: &mut TaskRng) -> usize {
        let row = &self.cdf[action * self.n + state];
        let u: f64 = rng.random::<f64>() * row.last().map_or(1.0, |x| x.1);
        let at = row.partition_point(|&(_, c)| c <= u);
        row[at.min(row.len() - 1)].0
    }

    /// Total cost of one rollout and whether it hit `max_steps`.
    pub(crate) fn rollout_cost(&self, controller: &Controller, start: usize, rng: &mut TaskRng) -> (f64, bool) {
        ROLLOUTS.fetch_add(1, Ordering::Relaxed);
        let fixed = controller.fixed_group(rng);
        let mut s = start;
        let mut total = 0.0;
        for _ in 0..self.max_steps {
            if Some(s) == self.terminal {
                return (total, false);
            }
            let a = match (fixed, controller) {
                (Some(g), _) => g,
                (None, Controller::Table(t)) => t[s],
                (None, Controller::EpisodeUniform { .. }) => unreachable!(),
            };
            total += self.costs[s * self.actions + a];
            s = self.next(s, a, rng);
        }
        (total, Some(s) != self.terminal)
    }

    /// One episode with day stamps from `gaps`, starting on `start_day`.
    pub fn trajectory(
        &self,
        controller: &Controller,
        start: usize,
        start_day: i64,
        gaps: &GapModel,
        rng: &mut TaskRng,
    ) -> Trajectory {
        let fixed = controller.fixed_group(rng);
        let mut steps = Vec::new();
        let (mut s, mut day, mut total) = (start, start_day, 0.0);
        for _ in 0..self.max_steps {
            if Some(s) == self.terminal {
                break;
            }
            let a = match (fixed, controller) {
                (Some(g), _) => g,
                (None, Controller::Table(t)) => t[s],
                (None, Controller::EpisodeUniform { .. }) => unreachable!(),
            };
            let cost = self.costs[s * self.actions + a];
            steps.push(Step { state: self.states[s], day, action: a, cost });
            total += cost;
            s = self.next(s, a, rng);
            day += gaps.sample(rng);
        }
        let absorbed = Some(s) == self.terminal;
        Trajectory { steps, total_cost: total, truncated: !absorbed, end_day: absorbed.then_some(day) }
    }
}

/// Simulate one episode from `start` on day 0.
pub fn simulate_episode(
    sim: &Simulator,
    controller: &Controller,
    start: &StateId,
    gaps: &GapModel,
    rng: &mut TaskRng,
) -> Result<Trajectory> {
    sim.check_controller(controller)?;
    let s = sim.index_of(start)?;
    Ok(sim.trajectory(controller, s, 0, gaps, rng))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ingest::StateSpace;
    use crate::kernel::{FallbackCounts, MdpProvenance, TargetNormalization};
    use crate::seeding::task_rng;

    pub fn mdp(rows: &[Vec<Vec<f64>>], costs: &[Vec<f64>]) -> EmpiricalMdp {
        let n = costs.len();
        let space = StateSpace::new(n - 1, 0);
        let provenance = MdpProvenance {
            kernel: "test".into(),
            k: None,
            dataset_hash: String::new(),
            target_normalization: TargetNormalization::KernelMass,
            fallback: FallbackCounts::default(),
        };
        let flat: Vec<f64> = rows.iter().flatten().flatten().copied().collect();
        let c: Vec<f64> = costs.iter().flatten().copied().collect();
        EmpiricalMdp::new(space, space.states(), rows.len(), flat, c, provenance).unwrap()
    }

    pub fn chain() -> EmpiricalMdp {
        mdp(
            &[vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]],
            &[vec![2.0], vec![3.0], vec![0.0]],
        )
    }

    #[test]
    fn deterministic_chain() {
        let sim = Simulator::new(&chain(), 200);
        let c = Controller::Table(vec![0; 3]);
        let mut rng = task_rng(1, &[]);
        let t = simulate_episode(&sim, &c, &StateId::clinical(0, 0), &GapModel::Constant(3), &mut rng).unwrap();
        assert_eq!(t.total_cost, 5.0);
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.steps[1].day, 3);
        assert_eq!(t.end_day, Some(6));
        assert!(!t.truncated);
    }

    #[test]
    fn terminal_start_is_empty() {
        let sim = Simulator::new(&chain(), 200);
        let mut rng = task_rng(1, &[]);
        let c = Controller::Table(vec![0; 3]);
        let t = simulate_episode(&sim, &c, &StateId::Terminal, &GapModel::Constant(1), &mut rng).unwrap();
        assert!(t.steps.is_empty());
        assert_eq!(t.total_cost, 0.0);
        assert_eq!(t.end_day, Some(0));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = mdp(&[vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.0, 0.0, 1.0]]], &[vec![2.0], vec![3.0], vec![0.0]]);
        let sim = Simulator::new(&m, 200);
        let c = Controller::Table(vec![0; 3]);
        let gaps = GapModel::Empirical(vec![1, 2, 7]);
        let run = |seed| simulate_episode(&sim, &c, &StateId::clinical(0, 0), &gaps, &mut task_rng(seed, &[])).unwrap();
        let a = serde_json::to_string(&run(5)).unwrap();
        assert_eq!(a, serde_json::to_string(&run(5)).unwrap());
    }

    #[test]
    fn truncation_is_flagged() {
        let m = mdp(&[vec![vec![1.0, 0.0], vec![0.0, 1.0]]], &[vec![1.0], vec![0.0]]);
        let sim = Simulator::new(&m, 10);
        let c = Controller::Table(vec![0; 2]);
        let t = simulate_episode(&sim, &c, &StateId::clinical(0, 0), &GapModel::Constant(1), &mut task_rng(0, &[]))
            .unwrap();
        assert!(t.truncated);
        assert_eq!(t.total_cost, 10.0);
        assert_eq!(t.end_day, None);
    }

    #[test]
    fn bad_controller_is_rejected() {
        let sim = Simulator::new(&chain(), 10);
        let mut rng = task_rng(0, &[]);
        let s = StateId::clinical(0, 0);
        let gaps = GapModel::Constant(1);
        assert!(simulate_episode(&sim, &Controller::Table(vec![1; 3]), &s, &gaps, &mut rng).is_err());
        assert!(simulate_episode(&sim, &Controller::behavior(2), &s, &gaps, &mut rng).is_err());
    }
}
