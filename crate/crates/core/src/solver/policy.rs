use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::iterate::{q_values, ValueVector};
use crate::error::Result;
use crate::ingest::StateId;
use crate::kernel::EmpiricalMdp;

/// Physician group to follow in every state. States not listed, TERMINAL
/// included, map to group 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPolicy {
    pub groups: usize,
    pub actions: BTreeMap<StateId, usize>,
}

impl GroupPolicy {
    pub fn constant(states: &[StateId], groups: usize, group: usize) -> Self {
        let actions = states.iter().filter(|s| !s.is_terminal()).map(|s| (*s, group)).collect();
        Self { groups, actions }
    }

    pub fn action(&self, state: &StateId) -> usize {
        self.actions.get(state).copied().unwrap_or(0)
    }
}

pub(crate) fn argmin(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &value) in q.iter().enumerate().skip(1) {
        if value < q[best] {
            best = a;
        }
    }
    best
}

/// Greedy policy for `v`, ties to the lowest group index.
pub fn extract_policy(mdp: &EmpiricalMdp, v: &ValueVector, discount: f64) -> Result<GroupPolicy> {
    let q = q_values(mdp, v, discount)?;
    let actions = mdp
        .states
        .iter()
        .zip(&q)
        .map(|(s, row)| (*s, if s.is_terminal() { 0 } else { argmin(row) }))
        .collect();
    Ok(GroupPolicy { groups: mdp.actions, actions })
}

#[cfg(test)]
mod tests {
    use super::super::iterate::tests::mdp;
    use super::super::iterate::{value_iteration, SolverConfig};
    use super::*;

    #[test]
    fn argmin_prefers_lowest_on_ties() {
        assert_eq!(argmin(&[10.0, 7.0]), 1);
        assert_eq!(argmin(&[4.0, 4.0]), 0);
        assert_eq!(argmin(&[5.0]), 0);
    }

    #[test]
    fn single_action_is_constant_zero() {
        let m = mdp(&[vec![vec![0.0, 1.0], vec![0.0, 1.0]]], &[vec![2.0], vec![0.0]]);
        let v = value_iteration(&m, &SolverConfig::default()).unwrap();
        let p = extract_policy(&m, &v, 1.0).unwrap();
        assert!(p.actions.values().all(|&a| a == 0));
    }

    #[test]
    fn picks_cheaper_group_and_scales() {
        let rows = vec![
            vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.0, 1.0]],
        ];
        let costs = vec![vec![1.0, 9.0], vec![4.0, 1.0], vec![0.0, 0.0]];
        let m = mdp(&rows, &costs);
        let v = value_iteration(&m, &SolverConfig::default()).unwrap();
        let p = extract_policy(&m, &v, 1.0).unwrap();
        assert_eq!(p.action(&StateId::clinical(1, 0)), 1);
        assert_eq!(p.action(&StateId::clinical(0, 0)), 0);
        assert_eq!(p.action(&StateId::Terminal), 0);
        let scaled: Vec<Vec<f64>> = costs.iter().map(|r| r.iter().map(|c| c * 3.0).collect()).collect();
        let m3 = mdp(&rows, &scaled);
        let v3 = value_iteration(&m3, &SolverConfig { tol: 1e-9, ..SolverConfig::default() }).unwrap();
        for (a, b) in v.values.iter().zip(&v3.values) {
            assert!((3.0 * a - b).abs() < 1e-5);
        }
        assert_eq!(extract_policy(&m3, &v3, 1.0).unwrap(), p);
    }

    #[test]
    fn policy_json_round_trip() {
        let mut p = GroupPolicy { groups: 2, actions: BTreeMap::new() };
        p.actions.insert(StateId::clinical(3, 1), 1);
        p.actions.insert(StateId::Terminal, 0);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"groups":2,"actions":{"3:1":1,"TERMINAL":0}}"#);
        assert_eq!(serde_json::from_str::<GroupPolicy>(&text).unwrap(), p);
    }
}
