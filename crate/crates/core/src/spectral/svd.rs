use nalgebra::{DMatrix, DVector};

use super::frequency::EmpiricalTransitionMatrix;
use crate::error::{Error, Result};
use crate::ingest::{StateId, StateSpace};

/// Full SVD `P = U Σ Vᵀ` with singular values in non-increasing order.
///
/// Columns of `v` are right singular vectors; each is signed so that its
/// entry of largest magnitude is positive (first such entry on ties), and the
/// matching column of `u` is flipped with it.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub space: StateSpace,
    pub states: Vec<StateId>,
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn new(p: &EmpiricalTransitionMatrix) -> Result<Self> {
        let n = p.matrix.nrows();
        if n == 0 || p.matrix.ncols() != n {
            return Err(Error::Dimension(format!("expected a square non-empty matrix, got {}x{}", n, p.matrix.ncols())));
        }
        let svd = p.matrix.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        let sv = svd.singular_values;

        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

        let mut us = DMatrix::zeros(n, order.len());
        let mut vs = DMatrix::zeros(n, order.len());
        let mut values = DVector::zeros(order.len());
        for (dst, &src) in order.iter().enumerate() {
            let v_col: Vec<f64> = v_t.row(src).iter().copied().collect();
            let mut pivot = 0;
            for (i, x) in v_col.iter().enumerate() {
                if x.abs() > v_col[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if v_col[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                vs[(i, dst)] = sign * v_col[i];
                us[(i, dst)] = sign * u[(i, src)];
            }
            values[dst] = sv[src].max(0.0);
        }
        Ok(Self { space: p.space, states: p.states.clone(), u: us, singular_values: values, v: vs })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }

    /// Leading `k` right singular vectors.
    pub fn features(&self, k: usize) -> Result<SpectralFeatures> {
        if k == 0 || k > self.dim() {
            return Err(Error::Dimension(format!("k = {k} outside [1, {}]", self.dim())));
        }
        Ok(SpectralFeatures {
            space: self.space,
            states: self.states.clone(),
            vectors: self.v.columns(0, k).into_owned(),
            singular_values: self.singular_values.iter().take(k).copied().collect(),
        })
    }
}

/// Markov features: one row per state, one column per retained singular vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFeatures {
    pub space: StateSpace,
    pub states: Vec<StateId>,
    pub vectors: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl SpectralFeatures {
    pub fn k(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row_of(&self, state: &StateId) -> Option<Vec<f64>> {
        let i = self.states.iter().position(|s| s == state)?;
        Some(self.vectors.row(i).iter().copied().collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("state");
        for j in 0..self.k() {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&s.to_string());
            for j in 0..self.k() {
                out.push_str(&format!(",{}", self.vectors[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn top_right_singular_vectors(p: &EmpiricalTransitionMatrix, k: usize) -> Result<SpectralFeatures> {
    if k == 0 || k > p.states.len() {
        return Err(Error::Dimension(format!("k = {k} outside [1, {}]", p.states.len())));
    }
    SpectralDecomposition::new(p)?.features(k)
}
