use nalgebra::{DMatrix, DVector};

use super::model::GroundTruthModel;
use crate::error::{Error, Result};
use crate::ingest::{StateId, StateSpace};
use crate::kernel::EmpiricalMdp;
use crate::spectral::StatePartition;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub values: Vec<f64>,
    /// Optimal action per MDP state, TERMINAL included (0).
    pub policy: Vec<usize>,
}

fn reaches_terminal(mdp: &EmpiricalMdp, policy: &[usize], terminal: usize) -> bool {
    let n = mdp.len();
    let mut reach = vec![false; n];
    reach[terminal] = true;
    loop {
        let mut changed = false;
        for s in 0..n {
            if !reach[s] && mdp.row(policy[s], s).iter().enumerate().any(|(j, &p)| p > 0.0 && reach[j]) {
                reach[s] = true;
                changed = true;
            }
        }
        if !changed {
            return reach.iter().all(|&r| r);
        }
    }
}

/// Exhaustive search over deterministic policies: each is evaluated by
/// solving `(I - P_pi) V = C_pi` on the non-terminal states.
pub fn oracle_value(mdp: &EmpiricalMdp) -> Result<OracleSolution> {
    let n = mdp.len();
    let terminal = mdp.terminal().ok_or_else(|| Error::Precondition("oracle needs a TERMINAL state".into()))?;
    if n > 8 || mdp.actions > 3 {
        return Err(Error::Precondition(format!("oracle limited to 8 states and 3 actions, got {n} and {}", mdp.actions)));
    }
    let clinical: Vec<usize> = (0..n).filter(|&s| s != terminal).collect();
    let m = clinical.len();
    let count = mdp.actions.pow(m as u32);
    let mut evaluated: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(count);
    for code in 0..count {
        let mut policy = vec![0; n];
        let mut rest = code;
        for &s in &clinical {
            policy[s] = rest % mdp.actions;
            rest /= mdp.actions;
        }
        if !reaches_terminal(mdp, &policy, terminal) {
            return Err(Error::Singular { policy });
        }
        let a = DMatrix::from_fn(m, m, |i, j| {
            f64::from(u8::from(i == j)) - mdp.prob(policy[clinical[i]], clinical[i], clinical[j])
        });
        let c = DVector::from_fn(m, |i, _| mdp.cost(clinical[i], policy[clinical[i]]));
        let v = a.lu().solve(&c).ok_or_else(|| Error::Singular { policy: policy.clone() })?;
        let mut values = vec![0.0; n];
        for (i, &s) in clinical.iter().enumerate() {
            values[s] = v[i];
        }
        evaluated.push((policy, values));
    }
    let best: Vec<f64> = (0..n).map(|s| evaluated.iter().map(|(_, v)| v[s]).fold(f64::INFINITY, f64::min)).collect();
    let (policy, _) = evaluated
        .iter()
        .find(|(_, v)| v.iter().zip(&best).all(|(x, b)| x - b <= 1e-9 * b.abs().max(1.0)))
        .cloned()
        .expect("an optimal deterministic policy exists for proper models");
    Ok(OracleSolution { values: best, policy })
}

/// True partition of the state space: each state takes the block emitting
/// its diagnosis category, TERMINAL its own block. `labels` are the
/// diagnosis dictionary labels in index order; labels the model never emits
/// (such as the reserved unknown category) go to block 0.
pub fn oracle_partition(model: &GroundTruthModel, labels: &[String], max_inpatient: usize) -> Result<StatePartition> {
    let space = StateSpace::new(labels.len(), max_inpatient);
    let mut block_of_label = Vec::with_capacity(labels.len());
    for label in labels {
        let block = match model.category_labels.iter().position(|l| l == label) {
            Some(c) => {
                let blocks = model.emitting_blocks(c);
                if blocks.len() > 1 {
                    return Err(Error::Ambiguity { category: label.clone(), blocks });
                }
                blocks.first().copied().unwrap_or(0)
            }
            None => 0,
        };
        block_of_label.push(block);
    }
    let assigned: Vec<(StateId, usize)> = (0..space.clinical_len())
        .map(|i| {
            let s = space.state(i);
            (s, block_of_label[s.diagnosis().expect("clinical")])
        })
        .collect();
    StatePartition::from_assignment(space, model.k_true, &assigned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StateSpace;
    use crate::kernel::{FallbackCounts, MdpProvenance, TargetNormalization};
    use crate::synth::ModelParams;

    fn mdp(rows: &[Vec<Vec<f64>>], costs: &[Vec<f64>]) -> EmpiricalMdp {
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

    #[test]
    fn single_action_is_a_linear_solve() {
        let m = mdp(&[vec![vec![0.5, 0.5], vec![0.0, 1.0]]], &[vec![3.0], vec![0.0]]);
        let o = oracle_value(&m).unwrap();
        assert!((o.values[0] - 6.0).abs() < 1e-12);
        assert_eq!(o.policy, vec![0, 0]);
    }

    #[test]
    fn deterministic_chain_telescopes() {
        let rows = vec![
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
        ];
        let m = mdp(&rows, &[vec![2.0, 9.0], vec![3.0, 1.0], vec![0.0, 0.0]]);
        let o = oracle_value(&m).unwrap();
        assert_eq!(o.values, vec![3.0, 1.0, 0.0]);
        assert_eq!(o.policy, vec![0, 1, 0]);
    }

    #[test]
    fn zero_costs_give_zero_value() {
        let rows = vec![vec![vec![0.5, 0.5], vec![0.0, 1.0]], vec![vec![0.1, 0.9], vec![0.0, 1.0]]];
        let o = oracle_value(&mdp(&rows, &[vec![0.0, 0.0], vec![0.0, 0.0]])).unwrap();
        assert_eq!(o.values, vec![0.0, 0.0]);
        assert_eq!(o.policy, vec![0, 0]);
    }

    #[test]
    fn improper_policy_is_named() {
        let rows = vec![vec![vec![0.5, 0.5], vec![0.0, 1.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]];
        let err = oracle_value(&mdp(&rows, &[vec![1.0, 1.0], vec![0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::Singular { ref policy } if policy == &vec![1, 0]));
    }

    #[test]
    fn partition_follows_emissions() {
        let model = GroundTruthModel::knee_replacement(&ModelParams::default()).unwrap();
        let mut labels = model.category_labels.clone();
        labels.push("UNKNOWN".into());
        let p = oracle_partition(&model, &labels, 4).unwrap();
        assert_eq!(p.num_blocks(), 4);
        assert_eq!(p.block_of(&StateId::clinical(0, 3)), Some(0));
        assert_eq!(p.block_of(&StateId::clinical(50, 0)), Some(1));
        assert_eq!(p.block_of(&StateId::clinical(137, 1)), Some(2));
        assert_eq!(p.block_of(&StateId::clinical(138, 1)), Some(0));
        assert_eq!(p.block_of(&StateId::Terminal), Some(3));

        let single = GroundTruthModel::knee_replacement(&ModelParams { stay: vec![0.9], block_cost: vec![1.0], ..ModelParams::default() }).unwrap();
        let p = oracle_partition(&single, &single.category_labels, 0).unwrap();
        assert!((0..138).all(|d| p.block_of(&StateId::clinical(d, 0)) == Some(0)));

        let overlapping = GroundTruthModel::knee_replacement(&ModelParams { overlap: 0.1, ..ModelParams::default() }).unwrap();
        assert!(matches!(oracle_partition(&overlapping, &labels, 4), Err(Error::Ambiguity { .. })));
    }
}
