use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mdp::{EmpiricalMdp, FallbackCounts, MdpProvenance};
use super::spec::{kernel_eval, KernelSpec};
use crate::error::{Error, Result};
use crate::ingest::{StateId, StateSpace, TransitionDataset};
use crate::spectral::StatePartition;

/// Denominator used for the target side of the kernel estimate.
///
/// `KernelMass` divides by `sum_{s''} K(s', s'')` (the block size for a
/// partition kernel), so a singleton partition reproduces plain empirical
/// frequencies. `SampleMass` divides by the kernel mass of observed targets
/// `sum_m K(s', s'_m)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetNormalization {
    #[default]
    KernelMass,
    SampleMass,
}

fn check_space(dataset: &TransitionDataset, spec: &KernelSpec) -> Result<()> {
    let space = match spec {
        KernelSpec::Partition(p) => p.space,
        KernelSpec::Spectral { features, .. } => features.space,
    };
    if space != dataset.space {
        return Err(Error::Dimension("kernel and dataset use different state spaces".into()));
    }
    Ok(())
}

fn self_loop(domain: &[StateId], s: &StateId) -> Vec<f64> {
    domain.iter().map(|t| f64::from(u8::from(t == s))).collect()
}

fn renormalize(row: &mut [f64]) -> bool {
    for p in row.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let sum: f64 = row.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        row.iter_mut().for_each(|p| *p /= sum);
        true
    } else {
        false
    }
}

/// Smoothed row over samples selected by `use_sample`, `None` without kernel mass.
fn row_from_samples(
    dataset: &TransitionDataset,
    spec: &KernelSpec,
    domain: &[StateId],
    s: &StateId,
    norm: TargetNormalization,
    use_sample: impl Fn(usize) -> bool,
) -> Result<Option<Vec<f64>>> {
    let mut mass = 0.0;
    let mut target_weight: Vec<(StateId, f64)> = Vec::new();
    let mut target_count: Vec<StateId> = Vec::new();
    for t in dataset.samples.iter().filter(|t| use_sample(t.action)) {
        let w = kernel_eval(spec, s, &t.state)?;
        mass += w;
        target_count.push(t.next);
        if w != 0.0 {
            match target_weight.iter_mut().find(|(x, _)| *x == t.next) {
                Some(entry) => entry.1 += w,
                None => target_weight.push((t.next, w)),
            }
        }
    }
    if mass <= 0.0 {
        return Ok(None);
    }
    let mut row = Vec::with_capacity(domain.len());
    for target in domain {
        let mut num = 0.0;
        for (t, w) in &target_weight {
            num += w * kernel_eval(spec, target, t)?;
        }
        let denom = match norm {
            TargetNormalization::KernelMass => {
                let mut d = 0.0;
                for other in domain {
                    d += kernel_eval(spec, target, other)?;
                }
                d
            }
            TargetNormalization::SampleMass => {
                let mut d = 0.0;
                for t in &target_count {
                    d += kernel_eval(spec, target, t)?;
                }
                d
            }
        };
        row.push(if denom > 0.0 { num / (mass * denom) } else { 0.0 });
    }
    Ok(if renormalize(&mut row) { Some(row) } else { None })
}

/// Kernel estimate of `P(. | s, a)` over the kernel's domain, with the
/// action-pooled and self-loop fallbacks.
pub fn estimate_transition_row(
    dataset: &TransitionDataset,
    spec: &KernelSpec,
    s: &StateId,
    a: usize,
    norm: TargetNormalization,
) -> Result<Vec<f64>> {
    check_space(dataset, spec)?;
    let domain = spec.domain();
    if !domain.contains(s) {
        return Err(Error::Lookup(format!("state {s} outside the kernel domain")));
    }
    if s.is_terminal() {
        return Ok(self_loop(&domain, s));
    }
    if let Some(row) = row_from_samples(dataset, spec, &domain, s, norm, |x| x == a)? {
        return Ok(row);
    }
    if let Some(row) = row_from_samples(dataset, spec, &domain, s, norm, |_| true)? {
        return Ok(row);
    }
    Ok(self_loop(&domain, s))
}

/// Kernel-weighted mean cost at `(s, a)`, clamped at zero, with the same
/// fallback chain as [`estimate_transition_row`].
pub fn estimate_cost(dataset: &TransitionDataset, spec: &KernelSpec, s: &StateId, a: usize) -> Result<f64> {
    check_space(dataset, spec)?;
    if s.is_terminal() {
        return Ok(0.0);
    }
    let weighted = |pick: &dyn Fn(usize) -> bool| -> Result<Option<f64>> {
        let (mut mass, mut total) = (0.0, 0.0);
        for t in dataset.samples.iter().filter(|t| pick(t.action)) {
            let w = kernel_eval(spec, s, &t.state)?;
            mass += w;
            total += w * t.cost;
        }
        Ok((mass > 0.0).then(|| total / mass))
    };
    let c = match weighted(&|x| x == a)? {
        Some(c) => c,
        None => weighted(&|_| true)?.unwrap_or_else(|| dataset.mean_cost()),
    };
    Ok(c.max(0.0))
}

struct Indexed {
    from: usize,
    action: usize,
    to: usize,
    cost: f64,
}

fn index_samples(dataset: &TransitionDataset, domain: &[StateId]) -> Result<Vec<Indexed>> {
    let mut lookup = vec![None; dataset.space.len()];
    for (i, s) in domain.iter().enumerate() {
        lookup[dataset.space.index(s).expect("domain lies in the space")] = Some(i);
    }
    let find = |s: &StateId| -> Result<usize> {
        dataset
            .space
            .index(s)
            .and_then(|i| lookup[i])
            .ok_or_else(|| Error::Lookup(format!("sample state {s} outside the kernel domain")))
    };
    dataset
        .samples
        .iter()
        .map(|t| {
            if t.action >= dataset.actions {
                return Err(Error::Lookup(format!("action {} with {} groups", t.action, dataset.actions)));
            }
            Ok(Indexed { from: find(&t.state)?, action: t.action, to: find(&t.next)?, cost: t.cost })
        })
        .collect()
}

/// Estimate the full MDP over the kernel's domain.
pub fn build_empirical_mdp(
    dataset: &TransitionDataset,
    spec: &KernelSpec,
    norm: TargetNormalization,
) -> Result<EmpiricalMdp> {
    check_space(dataset, spec)?;
    let domain = spec.domain();
    let samples = index_samples(dataset, &domain)?;
    let global_cost = dataset.mean_cost().max(0.0);
    let (transitions, costs, fallback) = match spec {
        KernelSpec::Partition(p) => partition_model(p, &domain, dataset.actions, &samples, norm, global_cost),
        KernelSpec::Spectral { .. } => {
            let kernel = spec.matrix(&domain)?;
            dense_model(&kernel, &domain, dataset.actions, &samples, norm, global_cost)
        }
    };
    let k = match spec {
        KernelSpec::Partition(p) => Some(p.k),
        KernelSpec::Spectral { features, .. } => Some(features.k()),
    };
    let provenance = MdpProvenance {
        kernel: spec.name().to_string(),
        k,
        dataset_hash: dataset.content_hash(),
        target_normalization: norm,
        fallback,
    };
    EmpiricalMdp::new(dataset.space, domain, dataset.actions, transitions, costs, provenance)
}

type Model = (Vec<f64>, Vec<f64>, FallbackCounts);

fn partition_model(
    p: &StatePartition,
    domain: &[StateId],
    actions: usize,
    samples: &[Indexed],
    norm: TargetNormalization,
    global_cost: f64,
) -> Model {
    let space: &StateSpace = &p.space;
    let n = domain.len();
    let nb = p.num_blocks();
    let block: Vec<usize> = domain.iter().map(|s| p.block_of(s).expect("partition covers its space")).collect();
    let mut size = vec![0usize; nb];
    for &b in &block {
        size[b] += 1;
    }
    // Per action plus a final pooled slot.
    let slots = actions + 1;
    let mut pair = vec![0u64; slots * nb * nb];
    let mut out = vec![0u64; slots * nb];
    let mut into = vec![0u64; slots * nb];
    let mut cost_sum = vec![0.0; slots * nb];
    for t in samples {
        let (bf, bt) = (block[t.from], block[t.to]);
        for slot in [t.action, actions] {
            pair[(slot * nb + bf) * nb + bt] += 1;
            out[slot * nb + bf] += 1;
            into[slot * nb + bt] += 1;
            cost_sum[slot * nb + bf] += t.cost;
        }
    }
    let block_row = |slot: usize, b: usize| -> Option<Vec<f64>> {
        let mass = out[slot * nb + b];
        if mass == 0 {
            return None;
        }
        let per_block: Vec<f64> = (0..nb)
            .map(|q| {
                let count = pair[(slot * nb + b) * nb + q];
                if count == 0 {
                    return 0.0;
                }
                let denom = match norm {
                    TargetNormalization::KernelMass => size[q] as f64,
                    TargetNormalization::SampleMass => into[slot * nb + q] as f64,
                };
                count as f64 / (mass as f64 * denom)
            })
            .collect();
        let mut row: Vec<f64> = block.iter().map(|&q| per_block[q]).collect();
        renormalize(&mut row).then_some(row)
    };
    let terminal = domain.iter().position(|s| s.is_terminal());
    let mut transitions = vec![0.0; actions * n * n];
    let mut costs = vec![0.0; n * actions];
    let mut fallback = FallbackCounts::default();
    let members = {
        let mut m = vec![Vec::new(); nb];
        for (i, &b) in block.iter().enumerate() {
            m[b].push(i);
        }
        m
    };
    for a in 0..actions {
        for b in 0..nb {
            let states: Vec<usize> = members[b].iter().copied().filter(|&i| Some(i) != terminal).collect();
            if states.is_empty() {
                continue;
            }
            let estimate = block_row(a, b)
                .map(|row| (row, cost_sum[a * nb + b] / out[a * nb + b] as f64))
                .or_else(|| {
                    block_row(actions, b).map(|row| {
                        fallback.pooled_actions += states.len();
                        (row, cost_sum[actions * nb + b] / out[actions * nb + b] as f64)
                    })
                });
            for &i in &states {
                let dst = &mut transitions[(a * n + i) * n..(a * n + i + 1) * n];
                match &estimate {
                    Some((row, c)) => {
                        dst.copy_from_slice(row);
                        costs[i * actions + a] = c.max(0.0);
                    }
                    None => {
                        fallback.self_loops += 1;
                        dst[i] = 1.0;
                        costs[i * actions + a] = global_cost;
                    }
                }
            }
        }
        if let Some(t) = terminal {
            transitions[(a * n + t) * n + t] = 1.0;
        }
    }
    debug_assert_eq!(space.len(), n);
    (transitions, costs, fallback)
}

fn dense_model(
    kernel: &[Vec<f64>],
    domain: &[StateId],
    actions: usize,
    samples: &[Indexed],
    norm: TargetNormalization,
    global_cost: f64,
) -> Model {
    let n = domain.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel[i][j]);
    let kernel_mass: DVector<f64> = DVector::from_fn(n, |j, _| k.row(j).sum());
    let slots = actions + 1;
    let mut counts = vec![DMatrix::<f64>::zeros(n, n); slots];
    let mut cost_sum = vec![DVector::<f64>::zeros(n); slots];
    for t in samples {
        for slot in [t.action, actions] {
            counts[slot][(t.from, t.to)] += 1.0;
            cost_sum[slot][t.from] += t.cost;
        }
    }
    struct Slot {
        mass: DVector<f64>,
        num: DMatrix<f64>,
        denom: DVector<f64>,
        cost: DVector<f64>,
    }
    let prepared: Vec<Slot> = counts
        .iter()
        .zip(&cost_sum)
        .map(|(c, cs)| {
            let out = DVector::from_fn(n, |i, _| c.row(i).sum());
            let into = DVector::from_fn(n, |j, _| c.column(j).sum());
            let g = &k * c;
            let num = &g * k.transpose();
            let denom = match norm {
                TargetNormalization::KernelMass => kernel_mass.clone(),
                TargetNormalization::SampleMass => &k * into,
            };
            Slot { mass: &k * out, num, denom, cost: &k * cs }
        })
        .collect();
    let row_of = |slot: &Slot, i: usize| -> Option<(Vec<f64>, f64)> {
        let mass = slot.mass[i];
        if mass <= 0.0 {
            return None;
        }
        let mut row: Vec<f64> = (0..n)
            .map(|j| if slot.denom[j] > 0.0 { slot.num[(i, j)] / (mass * slot.denom[j]) } else { 0.0 })
            .collect();
        renormalize(&mut row).then(|| (row, slot.cost[i] / mass))
    };
    let mut transitions = vec![0.0; actions * n * n];
    let mut costs = vec![0.0; n * actions];
    let mut fallback = FallbackCounts::default();
    for a in 0..actions {
        for i in 0..n {
            let dst = &mut transitions[(a * n + i) * n..(a * n + i + 1) * n];
            if domain[i].is_terminal() {
                dst[i] = 1.0;
                continue;
            }
            let estimate = row_of(&prepared[a], i).or_else(|| {
                let pooled = row_of(&prepared[actions], i);
                if pooled.is_some() {
                    fallback.pooled_actions += 1;
                }
                pooled
            });
            match estimate {
                Some((row, c)) => {
                    dst.copy_from_slice(&row);
                    costs[i * actions + a] = c.max(0.0);
                }
                None => {
                    fallback.self_loops += 1;
                    dst[i] = 1.0;
                    costs[i * actions + a] = global_cost;
                }
            }
        }
    }
    (transitions, costs, fallback)
}
