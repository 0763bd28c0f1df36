use serde::{Deserialize, Serialize};

use super::estimate::TargetNormalization;
use crate::error::{Error, Result};
use crate::ingest::{StateId, StateSpace};

/// How many (state, action) rows needed a fallback estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackCounts {
    /// No kernel mass for the action, estimated from all actions pooled.
    pub pooled_actions: usize,
    /// No kernel mass at all, self-loop with the global mean cost.
    pub self_loops: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpProvenance {
    pub kernel: String,
    /// Number of clinical blocks for a partition kernel, feature dimension for a spectral one.
    pub k: Option<usize>,
    pub dataset_hash: String,
    pub target_normalization: TargetNormalization,
    pub fallback: FallbackCounts,
}

/// Finite MDP over an explicit state list. Row `P(.|s, a)` for every
/// state/action pair, and an expected one-step cost `C(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMdp {
    pub space: StateSpace,
    pub states: Vec<StateId>,
    pub actions: usize,
    transitions: Vec<f64>,
    costs: Vec<f64>,
    pub provenance: MdpProvenance,
    lookup: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    space: StateSpace,
    states: Vec<StateId>,
    actions: usize,
    /// `transitions[a][s][s']`
    transitions: Vec<Vec<Vec<f64>>>,
    /// `costs[s][a]`
    costs: Vec<Vec<f64>>,
    provenance: MdpProvenance,
}

impl EmpiricalMdp {
    /// `transitions` is laid out `[a][s][s']`, `costs` as `[s][a]`.
    pub fn new(
        space: StateSpace,
        states: Vec<StateId>,
        actions: usize,
        transitions: Vec<f64>,
        costs: Vec<f64>,
        provenance: MdpProvenance,
    ) -> Result<Self> {
        let n = states.len();
        if actions == 0 {
            return Err(Error::Dimension("an MDP needs at least one action".into()));
        }
        if transitions.len() != actions * n * n || costs.len() != n * actions {
            return Err(Error::Dimension(format!(
                "{} transition and {} cost entries for {n} states and {actions} actions",
                transitions.len(),
                costs.len()
            )));
        }
        let mut lookup = vec![None; space.len()];
        for (i, s) in states.iter().enumerate() {
            let idx = space.index(s).ok_or_else(|| Error::Lookup(format!("state {s} outside the state space")))?;
            if lookup[idx].replace(i).is_some() {
                return Err(Error::Integrity(format!("state {s} listed twice")));
            }
        }
        Ok(Self { space, states, actions, transitions, costs, provenance, lookup })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &StateId) -> Option<usize> {
        self.space.index(state).and_then(|i| self.lookup[i])
    }

    pub fn terminal(&self) -> Option<usize> {
        self.index_of(&StateId::Terminal)
    }

    pub fn row(&self, action: usize, state: usize) -> &[f64] {
        let n = self.len();
        let start = (action * n + state) * n;
        &self.transitions[start..start + n]
    }

    pub fn prob(&self, action: usize, from: usize, to: usize) -> f64 {
        self.row(action, from)[to]
    }

    pub fn cost(&self, state: usize, action: usize) -> f64 {
        self.costs[state * self.actions + action]
    }

    /// Non-zero entries of every row, indexed `[a * n + s]`.
    pub fn sparse_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let n = self.len();
        (0..self.actions * n)
            .map(|r| {
                self.transitions[r * n..(r + 1) * n]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect()
    }

    /// Rows are stochastic within `tol`, costs are finite and non-negative,
    /// TERMINAL is a zero-cost self-loop.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for a in 0..self.actions {
            for i in 0..self.len() {
                let row = self.row(a, i);
                if row.iter().any(|&p| !(0.0..=1.0 + tol).contains(&p)) {
                    return Err(Error::Integrity(format!("row ({}, {a}) has an entry outside [0, 1]", self.states[i])));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::Integrity(format!("row ({}, {a}) sums to {sum}", self.states[i])));
                }
                let c = self.cost(i, a);
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::Integrity(format!("cost ({}, {a}) = {c}", self.states[i])));
                }
            }
        }
        if let Some(t) = self.terminal() {
            for a in 0..self.actions {
                if self.prob(a, t, t) != 1.0 || self.cost(t, a) != 0.0 {
                    return Err(Error::Integrity("TERMINAL is not a zero-cost self-loop".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.len();
        let file = MdpFile {
            space: self.space,
            states: self.states.clone(),
            actions: self.actions,
            transitions: (0..self.actions).map(|a| (0..n).map(|i| self.row(a, i).to_vec()).collect()).collect(),
            costs: (0..n).map(|i| (0..self.actions).map(|a| self.cost(i, a)).collect()).collect(),
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text)?;
        let n = file.states.len();
        let shape_ok = file.transitions.len() == file.actions
            && file.transitions.iter().all(|m| m.len() == n && m.iter().all(|r| r.len() == n))
            && file.costs.len() == n
            && file.costs.iter().all(|r| r.len() == file.actions);
        if !shape_ok {
            return Err(Error::Dimension("MDP arrays do not match the state and action counts".into()));
        }
        let transitions = file.transitions.into_iter().flatten().flatten().collect();
        let costs = file.costs.into_iter().flatten().collect();
        Self::new(file.space, file.states, file.actions, transitions, costs, file.provenance)
    }
}
