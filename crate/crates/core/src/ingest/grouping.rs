use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::records::{natural_cmp, EpisodeRecord};
use crate::error::{Error, Result};
use crate::seeding::task_rng;

/// Assignment of physicians to `j` groups with (nearly) equal mean episode cost.
/// The groups are the action set of the MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicianGrouping {
    pub j: usize,
    pub groups: BTreeMap<String, usize>,
    /// Episode-weighted mean episode cost per group.
    pub group_means: Vec<f64>,
    /// Largest pairwise difference of `group_means`.
    pub gap: f64,
}

impl PhysicianGrouping {
    pub fn group_of(&self, physician: &str) -> Option<usize> {
        self.groups.get(physician).copied()
    }

    pub fn members(&self, group: usize) -> Vec<&str> {
        self.groups.iter().filter(|(_, &g)| g == group).map(|(p, _)| p.as_str()).collect()
    }

    /// Grouping given up front, such as known skill groups; means and gap
    /// are computed from `episodes`.
    pub fn from_assignment(groups: BTreeMap<String, usize>, j: usize, episodes: &[EpisodeRecord]) -> Result<Self> {
        if let Some((p, g)) = groups.iter().find(|(_, &g)| g >= j) {
            return Err(Error::Config(format!("physician {p} assigned to group {g} of {j}")));
        }
        let mut sums = vec![0.0; j];
        let mut counts = vec![0.0; j];
        for e in episodes {
            let g = groups
                .get(&e.physician_id)
                .ok_or_else(|| Error::Lookup(format!("physician {} has no group", e.physician_id)))?;
            sums[*g] += e.total_cost;
            counts[*g] += 1.0;
        }
        let group_means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| if c > 0.0 { s / c } else { 0.0 }).collect();
        let gap = gap_of(group_means.iter().zip(&counts).filter(|(_, &c)| c > 0.0).map(|(m, _)| *m));
        Ok(Self { j, groups, group_means, gap })
    }
}

struct Split {
    sums: Vec<f64>,
    counts: Vec<f64>,
}

impl Split {
    fn gap(&self) -> f64 {
        gap_of(self.sums.iter().zip(&self.counts).map(|(s, c)| s / c))
    }
}

fn gap_of(means: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = means.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
    hi - lo
}

/// Random equal-size split followed by greedy pairwise swaps that shrink the
/// largest gap between group mean episode costs. Each attempt reshuffles
/// with a seed derived from `(seed, attempt)`.
pub fn group_physicians(
    episodes: &[EpisodeRecord],
    j: usize,
    seed: u64,
    balance_tolerance: f64,
    max_attempts: usize,
) -> Result<PhysicianGrouping> {
    if j == 0 {
        return Err(Error::Config("number of groups must be at least 1".into()));
    }
    let mut totals: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for e in episodes {
        let t = totals.entry(e.physician_id.as_str()).or_insert((0.0, 0.0));
        t.0 += e.total_cost;
        t.1 += 1.0;
    }
    let mut physicians: Vec<(&str, f64, f64)> = totals.into_iter().map(|(p, (s, c))| (p, s, c)).collect();
    physicians.sort_by(|a, b| natural_cmp(a.0, b.0));
    if physicians.len() < j {
        return Err(Error::Precondition(format!(
            "{} physicians cannot fill {j} groups",
            physicians.len()
        )));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for attempt in 0..max_attempts.max(1) {
        let mut rng = task_rng(seed, &[attempt as u64]);
        let mut order: Vec<usize> = (0..physicians.len()).collect();
        order.shuffle(&mut rng);
        let mut assign = vec![0usize; physicians.len()];
        for (pos, &p) in order.iter().enumerate() {
            assign[p] = pos % j;
        }
        let gap = balance(&physicians, &mut assign, j, balance_tolerance);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, assign));
        }
        if gap <= balance_tolerance {
            break;
        }
    }

    let (gap, assign) = best.expect("at least one attempt");
    if gap > balance_tolerance {
        return Err(Error::BalanceFailure { achieved_gap: gap, tolerance: balance_tolerance });
    }
    let mut sums = vec![0.0; j];
    let mut counts = vec![0.0; j];
    for (p, &g) in physicians.iter().zip(&assign) {
        sums[g] += p.1;
        counts[g] += p.2;
    }
    Ok(PhysicianGrouping {
        j,
        groups: physicians.iter().zip(&assign).map(|(p, &g)| (p.0.to_string(), g)).collect(),
        group_means: sums.iter().zip(&counts).map(|(s, c)| s / c).collect(),
        gap,
    })
}

fn balance(physicians: &[(&str, f64, f64)], assign: &mut [usize], j: usize, tolerance: f64) -> f64 {
    let mut split = Split { sums: vec![0.0; j], counts: vec![0.0; j] };
    for (p, &g) in physicians.iter().zip(assign.iter()) {
        split.sums[g] += p.1;
        split.counts[g] += p.2;
    }
    let mut gap = split.gap();
    while gap > tolerance {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..physicians.len() {
            for b in (a + 1)..physicians.len() {
                let (ga, gb) = (assign[a], assign[b]);
                if ga == gb {
                    continue;
                }
                let (pa, pb) = (&physicians[a], &physicians[b]);
                let means = (0..j).map(|g| {
                    let (mut s, mut c) = (split.sums[g], split.counts[g]);
                    if g == ga {
                        s += pb.1 - pa.1;
                        c += pb.2 - pa.2;
                    } else if g == gb {
                        s += pa.1 - pb.1;
                        c += pa.2 - pb.2;
                    }
                    s / c
                });
                let candidate = gap_of(means);
                if best.is_none_or(|(g, _, _)| candidate < g) {
                    best = Some((candidate, a, b));
                }
            }
        }
        match best {
            Some((candidate, a, b)) if candidate < gap => {
                let (ga, gb) = (assign[a], assign[b]);
                let (pa, pb) = (&physicians[a], &physicians[b]);
                split.sums[ga] += pb.1 - pa.1;
                split.counts[ga] += pb.2 - pa.2;
                split.sums[gb] += pa.1 - pb.1;
                split.counts[gb] += pa.2 - pb.2;
                assign[a] = gb;
                assign[b] = ga;
                gap = candidate;
            }
            _ => break,
        }
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episodes(costs: &[(&str, f64)]) -> Vec<EpisodeRecord> {
        costs
            .iter()
            .enumerate()
            .map(|(i, (p, c))| EpisodeRecord {
                episode_id: format!("e{i}"),
                beneficiary_id: format!("b{i}"),
                physician_id: p.to_string(),
                start_day: 0,
                end_day: 1,
                claims: vec![],
                total_cost: *c,
            })
            .collect()
    }

    #[test]
    fn single_group_takes_everyone() {
        let eps = episodes(&[("a", 1.0), ("b", 5.0), ("c", 9.0)]);
        let g = group_physicians(&eps, 1, 3, 0.0, 1).unwrap();
        assert!(g.groups.values().all(|&x| x == 0));
        assert_eq!(g.gap, 0.0);
    }

    #[test]
    fn equal_means_split_one_each() {
        let eps = episodes(&[("a", 7.0), ("b", 7.0)]);
        let g = group_physicians(&eps, 2, 11, 0.0, 1).unwrap();
        assert_ne!(g.group_of("a"), g.group_of("b"));
        assert_eq!(g.group_means[0], g.group_means[1]);
    }

    #[test]
    fn four_physicians_balance_to_outer_inner_pairs() {
        // brute force over the three 2-2 splits: {10,40}|{20,30} is the only gap-0 split
        let eps = episodes(&[("p10", 10.0), ("p20", 20.0), ("p30", 30.0), ("p40", 40.0)]);
        for seed in 0..20 {
            let g = group_physicians(&eps, 2, seed, 1e-9, 5).unwrap();
            assert_eq!(g.group_of("p10"), g.group_of("p40"));
            assert_eq!(g.group_of("p20"), g.group_of("p30"));
            assert_ne!(g.group_of("p10"), g.group_of("p20"));
            assert_eq!(g.group_means, vec![25.0, 25.0]);
        }
    }

    #[test]
    fn impossible_balance_reports_gap() {
        let eps = episodes(&[("a", 0.0), ("b", 100.0)]);
        match group_physicians(&eps, 2, 0, 1.0, 3) {
            Err(Error::BalanceFailure { achieved_gap, .. }) => assert_eq!(achieved_gap, 100.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_partition_with_balanced_sizes() {
        let costs: Vec<(String, f64)> = (0..37).map(|i| (format!("p{i}"), 1000.0 + (i * 37 % 11) as f64 * 50.0)).collect();
        let refs: Vec<(&str, f64)> = costs.iter().map(|(p, c)| (p.as_str(), *c)).collect();
        let eps = episodes(&refs);
        let a = group_physicians(&eps, 3, 99, 60.0, 20).unwrap();
        let b = group_physicians(&eps, 3, 99, 60.0, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.groups.len(), 37);
        let sizes: Vec<usize> = (0..3).map(|g| a.members(g).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
    }
}
