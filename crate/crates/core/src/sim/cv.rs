use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::evaluate::{episode_premium, BatchSummary, EpisodeStats, StartDistribution};
use super::simulate::{Controller, Simulator};
use super::PREMIUM_THRESHOLD;
use crate::error::{Error, Result};
use crate::ingest::{extract_transitions, group_physicians, Dictionaries, EpisodeRecord, PhysicianGrouping};
use crate::kernel::{build_empirical_mdp, KernelSpec, TargetNormalization};
use crate::seeding::{derive_seed, task_rng};
use crate::solver::{solve_reduced, SolverConfig};
use crate::spectral::{cluster_states, support_decomposition, StatePartition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k_range: Vec<usize>,
    pub groups: usize,
    pub max_inpatient: usize,
    pub restarts: usize,
    pub balance_tolerance: f64,
    pub balance_attempts: usize,
    /// Random splits.
    pub repeats: usize,
    /// Simulated episodes per split and model.
    pub rollouts: usize,
    pub max_steps: usize,
    pub split_retries: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub normalization: TargetNormalization,
    pub premium_threshold: f64,
    /// Fixed physician grouping; when absent every repeat draws a new balanced random one.
    pub grouping: Option<PhysicianGrouping>,
    /// Threads sharing the repeats; results do not depend on it.
    pub workers: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k_range: (2..=9).collect(),
            groups: 3,
            max_inpatient: 4,
            restarts: 100,
            balance_tolerance: 250.0,
            balance_attempts: 50,
            repeats: 500,
            rollouts: 400,
            max_steps: 200,
            split_retries: 20,
            seed: 0,
            solver: SolverConfig::default(),
            normalization: TargetNormalization::KernelMass,
            premium_threshold: PREMIUM_THRESHOLD,
            grouping: None,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub k: usize,
    pub in_sample: EpisodeStats,
    pub out_of_sample: EpisodeStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub entries: Vec<CvEntry>,
    pub selected_k: usize,
    /// Mean observed episode cost and premium over all input episodes.
    pub data_mean_cost: f64,
    pub data_mean_premium: f64,
    pub repeats: usize,
    pub rollouts: usize,
    pub seed: u64,
}

impl CvReport {
    pub fn entry(&self, k: usize) -> Option<&CvEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

/// Split the episode indices in half until both halves contain every group.
fn split(
    episodes: &[EpisodeRecord],
    group: &dyn Fn(&EpisodeRecord) -> usize,
    groups: usize,
    seed: u64,
    retries: usize,
) -> Result<(Vec<EpisodeRecord>, Vec<EpisodeRecord>)> {
    let covers = |half: &[EpisodeRecord]| {
        let mut seen = vec![false; groups];
        half.iter().for_each(|e| seen[group(e)] = true);
        seen.iter().all(|&x| x)
    };
    for attempt in 0..=retries {
        let mut order: Vec<usize> = (0..episodes.len()).collect();
        order.shuffle(&mut task_rng(seed, &[attempt as u64]));
        let half = episodes.len() / 2;
        let mut train: Vec<usize> = order[..half].to_vec();
        let mut test: Vec<usize> = order[half..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        let train: Vec<EpisodeRecord> = train.into_iter().map(|i| episodes[i].clone()).collect();
        let test: Vec<EpisodeRecord> = test.into_iter().map(|i| episodes[i].clone()).collect();
        if covers(&train) && covers(&test) {
            return Ok((train, test));
        }
    }
    Err(Error::Precondition(format!(
        "no 50/50 split in {} attempts leaves every group in both halves",
        retries + 1
    )))
}

/// One split: in-sample and out-of-sample batch per `k`, in `k_range` order.
fn repeat(
    episodes: &[EpisodeRecord],
    dict: &Dictionaries,
    cfg: &CvConfig,
    r: u64,
) -> Result<Vec<(BatchSummary, BatchSummary)>> {
    let grouping = match &cfg.grouping {
        Some(g) => g.clone(),
        None => group_physicians(
            episodes,
            cfg.groups,
            derive_seed(cfg.seed, &[r, 0]),
            cfg.balance_tolerance,
            cfg.balance_attempts,
        )?,
    };
    let groups = grouping.j;
    let group = |e: &EpisodeRecord| grouping.group_of(&e.physician_id).expect("grouped over all episodes");
    let (train, test) = split(episodes, &group, groups, derive_seed(cfg.seed, &[r, 1]), cfg.split_retries)?;
    let train = extract_transitions(&train, &grouping, cfg.max_inpatient, dict)?;
    let test = extract_transitions(&test, &grouping, cfg.max_inpatient, dict)?;
    let decomposition = support_decomposition(&train)?;
    let held_out =
        build_empirical_mdp(&test, &KernelSpec::Partition(StatePartition::singletons(test.space)), cfg.normalization)?;
    let held_out_sim = Simulator::new(&held_out, cfg.max_steps);
    let train_start = StartDistribution::Empirical(train.initial_states());
    let test_start = StartDistribution::Empirical(test.initial_states()).resolve(&held_out_sim)?;
    let mut out = Vec::with_capacity(cfg.k_range.len());
    for &k in &cfg.k_range {
        let features = decomposition.features(k)?;
        let partition = cluster_states(&features, k, cfg.restarts, derive_seed(cfg.seed, &[r, 2, k as u64]))?;
        let model = build_empirical_mdp(&train, &KernelSpec::Partition(partition.clone()), cfg.normalization)?;
        let (_, policy) = solve_reduced(&model, &partition, &cfg.solver)?;
        let trained = Simulator::new(&model, cfg.max_steps);
        let controller = Controller::from_policy(&policy, &model)?;
        let start = train_start.resolve(&trained)?;
        let mut rng = task_rng(cfg.seed, &[r, 3]);
        let inside = trained.batch(&controller, &start, cfg.rollouts, cfg.premium_threshold, &mut rng);
        let held_controller = Controller::from_policy(&policy, &held_out)?;
        let mut rng = task_rng(cfg.seed, &[r, 4]);
        let outside = held_out_sim.batch(&held_controller, &test_start, cfg.rollouts, cfg.premium_threshold, &mut rng);
        out.push((inside, outside));
    }
    Ok(out)
}

/// Two-fold cross-validation over the number of blocks `k`.
///
/// Every repeat regroups the physicians, splits the episodes in half, fits
/// one spectral decomposition on the training half and, for every `k`,
/// clusters, estimates the partition-kernel model and solves it. The policy
/// is simulated on the training model (in-sample) and on a plain empirical
/// model of the held-out half (out-of-sample); rollout seeds are shared
/// across `k`.
pub fn cross_validate(episodes: &[EpisodeRecord], dict: &Dictionaries, cfg: &CvConfig) -> Result<CvReport> {
    if episodes.len() < 2 {
        return Err(Error::Precondition("cross-validation needs at least two episodes".into()));
    }
    if cfg.k_range.is_empty() || cfg.repeats == 0 || cfg.rollouts == 0 || cfg.workers == 0 {
        return Err(Error::Config("k_range, repeats, rollouts and workers must be non-empty".into()));
    }
    let run = |r: usize| repeat(episodes, dict, cfg, r as u64);
    let results: Vec<Result<Vec<(BatchSummary, BatchSummary)>>> = if cfg.workers <= 1 {
        (0..cfg.repeats).map(run).collect()
    } else {
        let mut out: Vec<Option<Result<Vec<(BatchSummary, BatchSummary)>>>> = (0..cfg.repeats).map(|_| None).collect();
        let chunk = cfg.repeats.div_ceil(cfg.workers);
        std::thread::scope(|scope| {
            for (w, slot) in out.chunks_mut(chunk).enumerate() {
                let run = &run;
                scope.spawn(move || {
                    for (i, r) in slot.iter_mut().enumerate() {
                        *r = Some(run(w * chunk + i));
                    }
                });
            }
        });
        out.into_iter().map(|r| r.expect("every repeat ran")).collect()
    };
    let mut in_batches = vec![Vec::with_capacity(cfg.repeats); cfg.k_range.len()];
    let mut out_batches = vec![Vec::with_capacity(cfg.repeats); cfg.k_range.len()];
    for result in results {
        for (slot, (inside, outside)) in result?.into_iter().enumerate() {
            in_batches[slot].push(inside);
            out_batches[slot].push(outside);
        }
    }
    let entries: Vec<CvEntry> = cfg
        .k_range
        .iter()
        .enumerate()
        .map(|(slot, &k)| CvEntry {
            k,
            in_sample: EpisodeStats::from_batches(&in_batches[slot]),
            out_of_sample: EpisodeStats::from_batches(&out_batches[slot]),
        })
        .collect();
    let selected_k = entries
        .iter()
        .min_by(|a, b| a.out_of_sample.mean_cost.total_cmp(&b.out_of_sample.mean_cost))
        .map(|e| e.k)
        .expect("non-empty k range");
    let costs: Vec<f64> = episodes.iter().map(|e| e.total_cost).collect();
    let n = costs.len() as f64;
    Ok(CvReport {
        entries,
        selected_k,
        data_mean_cost: costs.iter().sum::<f64>() / n,
        data_mean_premium: costs.iter().map(|&c| episode_premium(c, cfg.premium_threshold)).sum::<f64>() / n,
        repeats: cfg.repeats,
        rollouts: cfg.rollouts,
        seed: cfg.seed,
    })
}
