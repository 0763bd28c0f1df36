use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ingest::{StateId, StateSpace, TransitionDataset};

/// Exact transition-pair counts over an ordered list of states.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMatrix {
    pub space: StateSpace,
    pub states: Vec<StateId>,
    counts: Vec<u64>,
}

impl FrequencyMatrix {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.dim() + col]
    }

    pub fn count(&self, from: &StateId, to: &StateId) -> u64 {
        let pos = |s: &StateId| self.states.iter().position(|x| x == s);
        match (pos(from), pos(to)) {
            (Some(r), Some(c)) => self.get(r, c),
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        let n = self.dim();
        self.counts[row * n..(row + 1) * n].iter().sum()
    }

    /// Clinical states with any observed transition in or out, followed by
    /// TERMINAL.
    pub fn support(&self) -> Vec<StateId> {
        let n = self.dim();
        let mut touched = vec![false; n];
        for r in 0..n {
            for c in 0..n {
                if self.get(r, c) > 0 {
                    touched[r] = true;
                    touched[c] = true;
                }
            }
        }
        let mut states: Vec<StateId> = self
            .states
            .iter()
            .zip(&touched)
            .filter(|(s, &t)| t && !s.is_terminal())
            .map(|(s, _)| *s)
            .collect();
        states.push(StateId::Terminal);
        states
    }

    /// Sub-matrix over `states` (in that order); unknown states get zero rows.
    pub fn restrict(&self, states: &[StateId]) -> FrequencyMatrix {
        let index: HashMap<StateId, usize> = self.states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let m = states.len();
        let mut counts = vec![0u64; m * m];
        for (r, s) in states.iter().enumerate() {
            let Some(&sr) = index.get(s) else { continue };
            for (c, t) in states.iter().enumerate() {
                if let Some(&tc) = index.get(t) {
                    counts[r * m + c] = self.get(sr, tc);
                }
            }
        }
        FrequencyMatrix { space: self.space, states: states.to_vec(), counts }
    }
}

/// Count every `(s, s')` pair of the dataset, pooled over actions, over the
/// full state space.
pub fn count_frequencies(dataset: &TransitionDataset) -> FrequencyMatrix {
    let space = dataset.space;
    let n = space.len();
    let mut counts = vec![0u64; n * n];
    for t in &dataset.samples {
        if let (Some(r), Some(c)) = (space.index(&t.state), space.index(&t.next)) {
            counts[r * n + c] += 1;
        }
    }
    FrequencyMatrix { space, states: space.states(), counts }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroRowRule {
    /// Unvisited states stay put.
    #[default]
    SelfLoop,
    Uniform,
}

/// Row-stochastic matrix over the same state list as its frequency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalTransitionMatrix {
    pub space: StateSpace,
    pub states: Vec<StateId>,
    pub matrix: DMatrix<f64>,
}

pub fn normalize_rows(freq: &FrequencyMatrix, rule: ZeroRowRule) -> EmpiricalTransitionMatrix {
    let n = freq.dim();
    let mut matrix = DMatrix::zeros(n, n);
    for r in 0..n {
        let sum = freq.row_sum(r);
        if freq.states[r].is_terminal() {
            matrix[(r, r)] = 1.0;
        } else if sum == 0 {
            match rule {
                ZeroRowRule::SelfLoop => matrix[(r, r)] = 1.0,
                ZeroRowRule::Uniform => matrix.row_mut(r).fill(1.0 / n as f64),
            }
        } else {
            let total = sum as f64;
            for c in 0..n {
                matrix[(r, c)] = freq.get(r, c) as f64 / total;
            }
        }
    }
    EmpiricalTransitionMatrix { space: freq.space, states: freq.states.clone(), matrix }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Transition;

    fn dataset(pairs: &[(StateId, StateId)]) -> TransitionDataset {
        TransitionDataset {
            space: StateSpace::new(2, 0),
            actions: 1,
            samples: pairs
                .iter()
                .enumerate()
                .map(|(i, (s, n))| Transition {
                    state: *s,
                    action: 0,
                    cost: 1.0,
                    next: *n,
                    episode: 0,
                    position: i,
                    procedure_code: None,
                })
                .collect(),
            episode_ids: vec!["e".into()],
            episode_physicians: vec!["p".into()],
        }
    }

    const A: StateId = StateId::Clinical { diagnosis: 0, inpatient: 0 };
    const B: StateId = StateId::Clinical { diagnosis: 1, inpatient: 0 };
    const T: StateId = StateId::Terminal;

    #[test]
    fn direct_counts() {
        let f = count_frequencies(&dataset(&[(A, A), (A, B), (B, T)]));
        assert_eq!((f.count(&A, &A), f.count(&A, &B), f.count(&B, &T)), (1, 1, 1));
        assert_eq!(f.count(&B, &A) + f.count(&T, &T) + f.count(&B, &B), 0);
        assert_eq!(f.total(), 3);
    }

    #[test]
    fn duplicates_counted_twice() {
        let f = count_frequencies(&dataset(&[(A, B), (A, B)]));
        assert_eq!(f.count(&A, &B), 2);
    }

    #[test]
    fn unvisited_rows_are_zero_and_become_self_loops() {
        let f = count_frequencies(&dataset(&[(A, T)]));
        assert_eq!(f.row_sum(1), 0);
        let p = normalize_rows(&f, ZeroRowRule::SelfLoop);
        assert_eq!(p.matrix[(1, 1)], 1.0);
        assert_eq!(p.matrix[(2, 2)], 1.0);
        let u = normalize_rows(&f, ZeroRowRule::Uniform);
        assert!((u.matrix.row(1).sum() - 1.0).abs() < 1e-12);
        assert_eq!(u.matrix[(2, 2)], 1.0);
    }

    #[test]
    fn row_normalization() {
        let f = count_frequencies(&dataset(&[(A, A), (A, A), (A, B), (A, B), (B, T), (B, T), (B, T), (B, T), (B, T)]));
        let p = normalize_rows(&f, ZeroRowRule::SelfLoop);
        assert_eq!(p.matrix.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5, 0.0]);
        assert_eq!(p.matrix.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn support_keeps_touched_states_and_terminal() {
        let mut ds = dataset(&[(B, T)]);
        ds.space = StateSpace::new(3, 0);
        let f = count_frequencies(&ds);
        assert_eq!(f.support(), vec![B, T]);
        let sub = f.restrict(&f.support());
        assert_eq!(sub.get(0, 1), 1);
        assert_eq!(sub.total(), 1);
    }
}
