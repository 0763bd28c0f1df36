use std::collections::BTreeMap;

use super::iterate::{SolverConfig, Tables, ValueVector};
use super::policy::{argmin, GroupPolicy};
use crate::error::{Error, Result};
use crate::kernel::EmpiricalMdp;
use crate::spectral::StatePartition;

const BLOCK_TOL: f64 = 1e-12;

/// Solve the `(k + 1)`-block MDP induced by a block-constant model and expand
/// the block values and actions back to every state.
pub fn solve_reduced(
    mdp: &EmpiricalMdp,
    partition: &StatePartition,
    cfg: &SolverConfig,
) -> Result<(ValueVector, GroupPolicy)> {
    if partition.space != mdp.space {
        return Err(Error::Dimension("partition and MDP use different state spaces".into()));
    }
    let nb = partition.num_blocks();
    let block: Vec<usize> = mdp.states.iter().map(|s| partition.block_of(s).expect("same space")).collect();
    let mut rep = vec![None; nb];
    for (i, &b) in block.iter().enumerate() {
        rep[b].get_or_insert(i);
    }
    // Compact indices over blocks that have at least one state in the MDP.
    let present: Vec<usize> = (0..nb).filter(|&b| rep[b].is_some()).collect();
    let mut compact = vec![usize::MAX; nb];
    for (c, &b) in present.iter().enumerate() {
        compact[b] = c;
    }
    let m = present.len();
    let aggregate = |a: usize, i: usize| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (j, &p) in mdp.row(a, i).iter().enumerate() {
            out[compact[block[j]]] += p;
        }
        out
    };
    let mut rows = vec![Vec::new(); mdp.actions * m];
    let mut costs = vec![0.0; m * mdp.actions];
    for a in 0..mdp.actions {
        let reference: Vec<Vec<f64>> = present.iter().map(|&b| aggregate(a, rep[b].unwrap())).collect();
        for i in 0..mdp.len() {
            let c = compact[block[i]];
            let r = rep[block[i]].unwrap();
            let row = if i == r { reference[c].clone() } else { aggregate(a, i) };
            let cost_gap = (mdp.cost(i, a) - mdp.cost(r, a)).abs();
            let row_gap = row.iter().zip(&reference[c]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if row_gap > BLOCK_TOL || cost_gap > BLOCK_TOL * mdp.cost(r, a).abs().max(1.0) {
                return Err(Error::Precondition(format!(
                    "state {} differs from its block representative {} under action {a}",
                    mdp.states[i], mdp.states[r]
                )));
            }
        }
        for (c, &b) in present.iter().enumerate() {
            rows[a * m + c] = reference[c].iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, &p)| (j, p)).collect();
            costs[c * mdp.actions + a] = mdp.cost(rep[b].unwrap(), a);
        }
    }
    let tables = Tables { n: m, actions: mdp.actions, rows, costs };
    let (block_values, iterations, residual) = tables.iterate(cfg)?;
    let block_actions: Vec<usize> = (0..m)
        .map(|c| {
            let q: Vec<f64> = (0..mdp.actions).map(|a| tables.q(c, a, &block_values, cfg.discount)).collect();
            argmin(&q)
        })
        .collect();
    let values = block.iter().map(|&b| block_values[compact[b]]).collect();
    let actions: BTreeMap<_, _> = mdp
        .states
        .iter()
        .zip(&block)
        .map(|(s, &b)| (*s, if s.is_terminal() { 0 } else { block_actions[compact[b]] }))
        .collect();
    Ok((
        ValueVector { states: mdp.states.clone(), values, iterations, residual },
        GroupPolicy { groups: mdp.actions, actions },
    ))
}
