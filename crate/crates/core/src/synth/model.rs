use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs for the default knee-replacement-like block model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub categories: usize,
    /// Probability of staying in each block per claim.
    pub stay: Vec<f64>,
    /// Mean claim cost per block before calibration.
    pub block_cost: Vec<f64>,
    pub skill_types: usize,
    /// Claim cost multiplier for a physician in their expert block, and elsewhere.
    pub expert_cost: f64,
    pub novice_cost: f64,
    /// Stay probability shift: experts stay `stay - tilt`, others `stay + tilt / 2`.
    pub stay_tilt: f64,
    /// Log-scale standard deviation of claim costs.
    pub cost_sigma: f64,
    /// Fraction of emissions leaking to another block's categories.
    pub overlap: f64,
    pub procedures_per_block: usize,
    pub procedure_na_rate: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            categories: 138,
            stay: vec![0.93, 0.93, 0.93],
            block_cost: vec![500.0, 900.0, 450.0],
            skill_types: 3,
            expert_cost: 0.7,
            novice_cost: 1.15,
            stay_tilt: 0.0,
            cost_sigma: 0.5,
            overlap: 0.0,
            procedures_per_block: 10,
            procedure_na_rate: 0.02,
        }
    }
}

/// Latent-block episode model. Blocks are visited in order and TERMINAL is
/// reachable only from the last block; every physician has a skill type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    pub k_true: usize,
    pub skill_types: usize,
    pub category_labels: Vec<String>,
    /// `emissions[b]`: `(category, probability)` pairs.
    pub emissions: Vec<Vec<(usize, f64)>>,
    /// Initial block distribution.
    pub initial: Vec<f64>,
    /// `transitions[b][t]` over blocks then TERMINAL.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `claim_cost[b][t]`: mean claim cost in USD.
    pub claim_cost: Vec<Vec<f64>>,
    pub cost_sigma: f64,
    /// Inpatient flag probability on the first claim after entering a block.
    pub inpatient_on_entry: Vec<f64>,
    /// Inpatient flag probability on any other claim.
    pub inpatient_rate: Vec<f64>,
    pub min_claims: usize,
    pub max_claims: usize,
    /// Inclusive uniform range of days between claim starts.
    pub gap_days: (i64, i64),
    pub claim_duration_days: (i64, i64),
    /// `procedures[b][t]`: `(code, probability)` pairs.
    pub procedures: Vec<Vec<Vec<(String, f64)>>>,
    pub procedure_na_rate: f64,
    /// Diagnosis codes per category.
    pub codes_per_category: usize,
}

fn block_of_category(c: usize, d: usize, k: usize) -> usize {
    (c * k / d).min(k - 1)
}

impl GroundTruthModel {
    /// Three-block model (pre-operative, surgical, rehabilitation) with
    /// disjoint contiguous diagnosis ranges, uncalibrated.
    pub fn knee_replacement(p: &ModelParams) -> Result<Self> {
        let k = p.stay.len();
        if k == 0 || p.block_cost.len() != k || p.categories < k || p.skill_types == 0 {
            return Err(Error::Config("block model needs matching stay/cost lists and categories >= blocks".into()));
        }
        let d = p.categories;
        let labels = (0..d).map(|c| format!("DX{c:03}")).collect();
        let emissions = (0..k)
            .map(|b| {
                let own: Vec<usize> = (0..d).filter(|&c| block_of_category(c, d, k) == b).collect();
                let other: Vec<usize> = (0..d).filter(|&c| block_of_category(c, d, k) != b).collect();
                let mut e: Vec<(usize, f64)> =
                    own.iter().map(|&c| (c, (1.0 - p.overlap) / own.len() as f64)).collect();
                if p.overlap > 0.0 && !other.is_empty() {
                    e.extend(other.iter().map(|&c| (c, p.overlap / other.len() as f64)));
                    e.sort_by_key(|x| x.0);
                }
                e
            })
            .collect();
        let expert_block = |t: usize| t % k;
        let transitions = (0..k)
            .map(|b| {
                (0..p.skill_types)
                    .map(|t| {
                        let shift = if expert_block(t) == b { -p.stay_tilt } else { p.stay_tilt / 2.0 };
                        let stay = (p.stay[b] + shift).clamp(0.0, 0.995);
                        let mut row = vec![0.0; k + 1];
                        row[b] = stay;
                        row[b + 1] = 1.0 - stay;
                        row
                    })
                    .collect()
            })
            .collect();
        let claim_cost = (0..k)
            .map(|b| {
                (0..p.skill_types)
                    .map(|t| p.block_cost[b] * if expert_block(t) == b { p.expert_cost } else { p.novice_cost })
                    .collect()
            })
            .collect();
        let procedures = (0..k)
            .map(|b| {
                (0..p.skill_types)
                    .map(|t| {
                        let n = p.procedures_per_block.max(1);
                        let weights: Vec<f64> = (0..n)
                            .map(|i| if (i < n / 2) == (expert_block(t) == b) { 3.0 } else { 1.0 })
                            .collect();
                        let total: f64 = weights.iter().sum();
                        (0..n).map(|i| (format!("PR{b}{i:02}"), weights[i] / total)).collect()
                    })
                    .collect()
            })
            .collect();
        let mut initial = vec![0.0; k];
        initial[0] = 1.0;
        let mut inpatient_on_entry = vec![0.0; k];
        if k > 1 {
            inpatient_on_entry[1] = 1.0;
        }
        let model = Self {
            k_true: k,
            skill_types: p.skill_types,
            category_labels: labels,
            emissions,
            initial,
            transitions,
            claim_cost,
            cost_sigma: p.cost_sigma,
            inpatient_on_entry,
            inpatient_rate: vec![0.0; k],
            min_claims: 8,
            max_claims: 56,
            gap_days: (1, 6),
            claim_duration_days: (0, 2),
            procedures,
            procedure_na_rate: p.procedure_na_rate,
            codes_per_category: 4,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k_true;
        let proper = |v: &[f64]| v.iter().all(|&p| (0.0..=1.0).contains(&p)) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        let bad = |what: &str| Err(Error::Config(format!("ground-truth model: {what}")));
        if self.emissions.len() != k || self.transitions.len() != k || self.claim_cost.len() != k || self.procedures.len() != k {
            return bad("per-block tables must have k_true entries");
        }
        if !proper(&self.initial) || self.initial.len() != k {
            return bad("initial distribution is not proper");
        }
        for b in 0..k {
            let e: Vec<f64> = self.emissions[b].iter().map(|x| x.1).collect();
            if !proper(&e) || self.emissions[b].iter().any(|x| x.0 >= self.category_labels.len()) {
                return bad("emission distribution is not proper");
            }
            if self.transitions[b].len() != self.skill_types || self.claim_cost[b].len() != self.skill_types {
                return bad("per-type tables must have skill_types entries");
            }
            for t in 0..self.skill_types {
                let row = &self.transitions[b][t];
                if row.len() != k + 1 || !proper(row) {
                    return bad("transition row is not proper");
                }
                let pr: Vec<f64> = self.procedures[b][t].iter().map(|x| x.1).collect();
                if !proper(&pr) {
                    return bad("procedure distribution is not proper");
                }
                if !(self.claim_cost[b][t] >= 0.0) {
                    return bad("claim costs must be non-negative");
                }
            }
        }
        if self.min_claims == 0 || self.min_claims > self.max_claims {
            return bad("claims-per-episode range is empty");
        }
        for t in 0..self.skill_types {
            let reach = self.absorption_within(t, self.max_claims);
            if reach.iter().any(|&r| r <= 0.0) {
                return bad("some block cannot reach TERMINAL within the episode-length bound");
            }
        }
        Ok(())
    }

    /// Probability of reaching TERMINAL within `steps` claims from each block.
    fn absorption_within(&self, t: usize, steps: usize) -> Vec<f64> {
        let k = self.k_true;
        let mut h = vec![0.0; k];
        for _ in 0..steps {
            h = (0..k)
                .map(|b| {
                    let row = &self.transitions[b][t];
                    row[k] + (0..k).map(|c| row[c] * h[c]).sum::<f64>()
                })
                .collect();
        }
        h
    }

    /// Expected episode cost for skill type `t`, accounting for rejection of
    /// episodes shorter than `min_claims` and truncation at `max_claims`.
    pub fn expected_episode_cost(&self, t: usize) -> f64 {
        let k = self.k_true;
        let m = self.min_claims;
        // survive[s][b]: probability of still being alive after claim m - 1
        // given block b at claim s (s < m).
        let mut survive = vec![vec![1.0; k]; m];
        for s in (0..m.saturating_sub(1)).rev() {
            survive[s] = (0..k)
                .map(|b| (0..k).map(|c| self.transitions[b][t][c] * survive[s + 1][c]).sum())
                .collect();
        }
        let mut alive = self.initial.clone();
        let (mut total, mut accept) = (0.0, None);
        for s in 0..self.max_claims {
            for b in 0..k {
                let weight = if s < m { survive[s][b] } else { 1.0 };
                total += alive[b] * weight * self.claim_cost[b][t];
            }
            if s == m - 1 {
                accept = Some(alive.iter().sum::<f64>());
            }
            alive = (0..k).map(|c| (0..k).map(|b| alive[b] * self.transitions[b][t][c]).sum()).collect();
        }
        total / accept.unwrap_or(1.0)
    }

    /// Mean episode cost with skill types equally likely.
    pub fn expected_cost(&self) -> f64 {
        (0..self.skill_types).map(|t| self.expected_episode_cost(t)).sum::<f64>() / self.skill_types as f64
    }

    /// Rescale all claim costs so the expected episode cost equals `target`.
    pub fn calibrate(&mut self, target: f64) -> f64 {
        let scale = target / self.expected_cost();
        for row in &mut self.claim_cost {
            for c in row.iter_mut() {
                *c *= scale;
            }
        }
        scale
    }

    /// Blocks emitting each category.
    pub fn emitting_blocks(&self, category: usize) -> Vec<usize> {
        (0..self.k_true).filter(|&b| self.emissions[b].iter().any(|&(c, p)| c == category && p > 0.0)).collect()
    }
}
