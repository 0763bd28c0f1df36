use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::model::{GroundTruthModel, ModelParams};
use crate::error::{Error, Result};
use crate::ingest::{write_claims, ClaimId, ClaimRecord};
use crate::seeding::{task_rng, TaskRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_episodes: usize,
    pub n_physicians: usize,
    pub n_beneficiaries: usize,
    pub seed: u64,
    pub target_mean: f64,
    pub target_std: f64,
    pub params: ModelParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_episodes: 212,
            n_physicians: 37,
            n_beneficiaries: 205,
            seed: 0,
            target_mean: 19_559.0,
            target_std: 8_101.0,
            params: ModelParams::default(),
        }
    }
}

impl SynthConfig {
    /// Default block model calibrated to `target_mean`.
    pub fn calibrated_model(&self) -> Result<GroundTruthModel> {
        let mut model = GroundTruthModel::knee_replacement(&self.params)?;
        model.calibrate(self.target_mean);
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSidecar {
    pub config: SynthConfig,
    pub model: GroundTruthModel,
    pub analytic_mean_cost: f64,
    pub sampled_mean_cost: f64,
    pub sampled_std_cost: f64,
    pub physician_types: BTreeMap<String, usize>,
    /// Block of every emitted diagnosis category.
    pub category_blocks: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub claims: Vec<ClaimRecord>,
    pub sidecar: GroundTruthSidecar,
}

impl SynthOutput {
    pub fn csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_claims(&self.claims, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.sidecar)?)
    }
}

fn draw<T: Copy>(items: &[(T, f64)], rng: &mut TaskRng) -> T {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(x, p) in items {
        acc += p;
        if u < acc {
            return x;
        }
    }
    items.last().expect("non-empty distribution").0
}

fn draw_index(p: &[f64], rng: &mut TaskRng) -> usize {
    let pairs: Vec<(usize, f64)> = p.iter().copied().enumerate().collect();
    draw(&pairs, rng)
}

struct Claim {
    block: usize,
    category: usize,
    inpatient: bool,
    cost: f64,
    procedure: Option<usize>,
}

fn sample_episode(model: &GroundTruthModel, t: usize, noise: &[LogNormal<f64>], rng: &mut TaskRng) -> Vec<Claim> {
    let k = model.k_true;
    loop {
        let mut claims = Vec::new();
        let mut block = draw_index(&model.initial, rng);
        let mut entered = true;
        while claims.len() < model.max_claims {
            let flag_p = if entered { model.inpatient_on_entry[block] } else { model.inpatient_rate[block] };
            let inpatient = flag_p > 0.0 && rng.random::<f64>() < flag_p;
            let category = draw(&model.emissions[block], rng);
            let cost = (model.claim_cost[block][t] * noise[block].sample(rng) * 100.0).round() / 100.0;
            let procedure = if rng.random::<f64>() < model.procedure_na_rate {
                None
            } else {
                let pairs: Vec<(usize, f64)> =
                    model.procedures[block][t].iter().enumerate().map(|(i, (_, p))| (i, *p)).collect();
                Some(draw(&pairs, rng))
            };
            claims.push(Claim { block, category, inpatient, cost, procedure });
            let next = draw_index(&model.transitions[block][t], rng);
            if next == k {
                break;
            }
            entered = next != block;
            block = next;
        }
        if claims.len() >= model.min_claims {
            return claims;
        }
    }
}

/// Sample claims for `config.n_episodes` episodes from `model`.
pub fn generate_claims(config: &SynthConfig, model: &GroundTruthModel) -> Result<SynthOutput> {
    model.validate()?;
    if config.n_physicians == 0 || config.n_beneficiaries == 0 || config.n_episodes == 0 {
        return Err(Error::Config("episodes, physicians and beneficiaries must be positive".into()));
    }
    let mut rng = task_rng(config.seed, &[]);
    let mut types: Vec<usize> = (0..config.n_physicians).map(|i| i % model.skill_types).collect();
    types.shuffle(&mut rng);
    let physician_id = |p: usize| format!("P{:03}", p + 1);

    let beneficiaries = config.n_beneficiaries.min(config.n_episodes);
    let mut order: Vec<usize> = (0..config.n_physicians).collect();
    order.shuffle(&mut rng);
    let doctor_of: Vec<usize> = (0..beneficiaries)
        .map(|b| if b < order.len() { order[b] } else { rng.random_range(0..config.n_physicians) })
        .collect();
    let owner: Vec<usize> = (0..config.n_episodes)
        .map(|e| if e < beneficiaries { e } else { rng.random_range(0..beneficiaries) })
        .collect();

    // Log-normal noise with unit mean.
    let sigma = model.cost_sigma.max(0.0);
    let noise: Vec<LogNormal<f64>> = (0..model.k_true)
        .map(|_| LogNormal::new(-sigma * sigma / 2.0, sigma).expect("finite sigma"))
        .collect();

    let mut claims = Vec::new();
    let mut totals = Vec::with_capacity(config.n_episodes);
    for (e, &bene) in owner.iter().enumerate() {
        let physician = doctor_of[bene];
        let t = types[physician];
        let episode = sample_episode(model, t, &noise, &mut rng);
        let start = rng.random_range(0..730i64);
        let mut day = start;
        let mut rows = Vec::with_capacity(episode.len());
        for (i, c) in episode.iter().enumerate() {
            if i > 0 {
                day += rng.random_range(model.gap_days.0..=model.gap_days.1);
            }
            let end = day + rng.random_range(model.claim_duration_days.0..=model.claim_duration_days.1);
            let label = &model.category_labels[c.category];
            let code = rng.random_range(0..model.codes_per_category.max(1));
            let procedure = c.procedure.map(|p| model.procedures[c.block][t][p].0.clone());
            rows.push((day, end, label.clone(), format!("{label}.{code}"), procedure, c.inpatient, c.cost));
        }
        let total = (episode.iter().map(|c| c.cost).sum::<f64>() * 100.0).round() / 100.0;
        let end_day = rows.iter().map(|r| r.1).max().unwrap_or(start);
        totals.push(total);
        for (i, (day, end, label, dx, procedure, inpatient, cost)) in rows.into_iter().enumerate() {
            claims.push(ClaimRecord {
                episode_id: format!("E{:05}", e + 1),
                beneficiary_id: format!("B{:05}", bene + 1),
                episode_start_day: start,
                episode_end_day: end_day,
                episode_total_cost: total,
                physician_id: physician_id(physician),
                claim_id: ClaimId::new(format!("E{:05}-C{:02}", e + 1, i + 1)),
                claim_start_day: day,
                claim_end_day: end,
                claim_cost: cost,
                procedure_category: procedure.as_ref().map(|p| p[..p.len() - 1].to_string()),
                procedure_code: procedure,
                diagnosis_code: Some(dx),
                diagnosis_category: Some(label),
                inpatient_flag: inpatient,
            });
        }
    }
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let std = if totals.len() > 1 { (totals.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    if config.n_episodes >= 10_000 && (mean / config.target_mean - 1.0).abs() > 0.1 {
        return Err(Error::Calibration(format!(
            "sampled mean episode cost {mean:.2} is more than 10% away from the target {:.2}",
            config.target_mean
        )));
    }
    let category_blocks = (0..model.category_labels.len())
        .filter_map(|c| model.emitting_blocks(c).first().map(|&b| (model.category_labels[c].clone(), b)))
        .collect();
    let sidecar = GroundTruthSidecar {
        config: config.clone(),
        model: model.clone(),
        analytic_mean_cost: model.expected_cost(),
        sampled_mean_cost: mean,
        sampled_std_cost: std,
        physician_types: types.iter().enumerate().map(|(p, &t)| (physician_id(p), t)).collect(),
        category_blocks,
    };
    Ok(SynthOutput { claims, sidecar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{assemble_episodes, AssemblyConfig};

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig { n_episodes: 30, ..SynthConfig::default() };
        let model = cfg.calibrated_model().unwrap();
        let a = generate_claims(&cfg, &model).unwrap();
        let b = generate_claims(&cfg, &model).unwrap();
        assert_eq!(a.csv().unwrap(), b.csv().unwrap());
        assert_eq!(a.sidecar_json().unwrap(), b.sidecar_json().unwrap());
        let c = generate_claims(&SynthConfig { seed: 1, ..cfg }, &model).unwrap();
        assert_ne!(a.csv().unwrap(), c.csv().unwrap());
    }

    #[test]
    fn episodes_respect_length_law_and_costs_add_up() {
        let cfg = SynthConfig::default();
        let out = generate_claims(&cfg, &cfg.calibrated_model().unwrap()).unwrap();
        let report = assemble_episodes(&out.claims, &AssemblyConfig::default()).unwrap();
        assert_eq!(report.episodes.len(), 212);
        assert!(report.cost_mismatches.is_empty());
        for ep in &report.episodes {
            assert!((8..=56).contains(&ep.len()));
        }
        let physicians: std::collections::BTreeSet<_> = report.episodes.iter().map(|e| &e.physician_id).collect();
        let benes: std::collections::BTreeSet<_> = report.episodes.iter().map(|e| &e.beneficiary_id).collect();
        assert_eq!((physicians.len(), benes.len()), (37, 205));
    }

    #[test]
    fn degenerate_model_gives_identical_structure() {
        let params = ModelParams {
            stay: vec![0.0],
            block_cost: vec![100.0],
            skill_types: 1,
            stay_tilt: 0.0,
            cost_sigma: 0.0,
            procedure_na_rate: 0.0,
            categories: 1,
            ..ModelParams::default()
        };
        let mut model = GroundTruthModel::knee_replacement(&params).unwrap();
        model.min_claims = 1;
        let cfg = SynthConfig { n_episodes: 20, params, ..SynthConfig::default() };
        let out = generate_claims(&cfg, &model).unwrap();
        assert_eq!(out.claims.len(), 20);
        assert!(out.claims.iter().all(|c| c.claim_cost == 70.0 && c.diagnosis_category.as_deref() == Some("DX000")));
    }
}
