use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::StateId;
use crate::kernel::EmpiricalMdp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub discount: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 100_000, discount: 1.0 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount must lie in (0, 1], got {}", self.discount)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Optimal expected remaining cost per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueVector {
    pub states: Vec<StateId>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ValueVector {
    pub fn get(&self, state: &StateId) -> Option<f64> {
        self.states.iter().position(|s| s == state).map(|i| self.values[i])
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["state_key", "value"])?;
        for (s, v) in self.states.iter().zip(&self.values) {
            w.write_record([s.to_string(), v.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Sparse arrays for a finite MDP: `rows[a * n + s]`, `costs[s * actions + a]`.
pub(crate) struct Tables {
    pub n: usize,
    pub actions: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub costs: Vec<f64>,
}

impl Tables {
    pub fn from_mdp(mdp: &EmpiricalMdp) -> Self {
        let n = mdp.len();
        let costs = (0..n).flat_map(|i| (0..mdp.actions).map(move |a| (i, a))).map(|(i, a)| mdp.cost(i, a)).collect();
        Self { n, actions: mdp.actions, rows: mdp.sparse_rows(), costs }
    }

    pub fn q(&self, s: usize, a: usize, v: &[f64], discount: f64) -> f64 {
        let future: f64 = self.rows[a * self.n + s].iter().map(|&(j, p)| p * v[j]).sum();
        self.costs[s * self.actions + a] + discount * future
    }

    pub fn iterate(&self, cfg: &SolverConfig) -> Result<(Vec<f64>, usize, f64)> {
        cfg.validate()?;
        let mut v = vec![0.0; self.n];
        let mut next = vec![0.0; self.n];
        let mut residual = f64::INFINITY;
        for iteration in 1..=cfg.max_iter {
            residual = 0.0;
            for s in 0..self.n {
                let best = (0..self.actions).map(|a| self.q(s, a, &v, cfg.discount)).fold(f64::INFINITY, f64::min);
                residual = f64::max(residual, (best - v[s]).abs());
                next[s] = best;
            }
            std::mem::swap(&mut v, &mut next);
            if !residual.is_finite() {
                break;
            }
            if residual < cfg.tol {
                return Ok((v, iteration, residual));
            }
        }
        Err(Error::NonConvergence { residual, tol: cfg.tol, iterations: cfg.max_iter })
    }
}

/// Synchronous value iteration from `V = 0` until the sup-norm change falls below `tol`.
pub fn value_iteration(mdp: &EmpiricalMdp, cfg: &SolverConfig) -> Result<ValueVector> {
    let (values, iterations, residual) = Tables::from_mdp(mdp).iterate(cfg)?;
    Ok(ValueVector { states: mdp.states.clone(), values, iterations, residual })
}

/// One-step lookahead `Q[s][a]` for a value vector over the MDP's states.
pub fn q_values(mdp: &EmpiricalMdp, v: &ValueVector, discount: f64) -> Result<Vec<Vec<f64>>> {
    if v.values.len() != mdp.len() {
        return Err(Error::Dimension(format!("{} values for {} states", v.values.len(), mdp.len())));
    }
    let tables = Tables::from_mdp(mdp);
    Ok((0..mdp.len()).map(|s| (0..mdp.actions).map(|a| tables.q(s, a, &v.values, discount)).collect()).collect())
}
