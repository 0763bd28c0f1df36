use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::policy::GroupPolicy;
use crate::error::{Error, Result};
use crate::ingest::{PhysicianGrouping, StateId, TransitionDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrescriptionSource {
    /// Claims at the state by physicians of the chosen group.
    Group,
    /// Claims at the state by any group.
    Pooled,
    /// Every claim in the dataset.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePrescription {
    pub group: usize,
    pub source: PrescriptionSource,
    pub samples: usize,
    pub distribution: BTreeMap<String, f64>,
}

impl StatePrescription {
    pub fn support(&self) -> usize {
        self.distribution.len()
    }
}

/// Procedure-code distribution to follow in every non-terminal state of the policy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionPolicy {
    pub states: BTreeMap<StateId, StatePrescription>,
}

fn distribution<'a>(codes: impl Iterator<Item = &'a str>) -> (usize, BTreeMap<String, f64>) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in codes {
        *counts.entry(c.to_string()).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    let dist = counts.into_iter().map(|(c, n)| (c, n as f64 / total as f64)).collect();
    (total, dist)
}

pub fn derive_prescription_policy(
    dataset: &TransitionDataset,
    grouping: &PhysicianGrouping,
    policy: &GroupPolicy,
) -> Result<PrescriptionPolicy> {
    let episode_group: Vec<usize> = dataset
        .episode_physicians
        .iter()
        .map(|p| grouping.group_of(p).ok_or_else(|| Error::Lookup(format!("physician {p} has no group"))))
        .collect::<Result<_>>()?;
    let coded: Vec<(&StateId, usize, &str)> = dataset
        .samples
        .iter()
        .filter_map(|t| t.procedure_code.as_deref().map(|c| (&t.state, episode_group[t.episode], c)))
        .collect();
    let global = distribution(coded.iter().map(|x| x.2));
    let mut states = BTreeMap::new();
    for (state, &group) in policy.actions.iter().filter(|(s, _)| !s.is_terminal()) {
        let own = distribution(coded.iter().filter(|x| x.0 == state && x.1 == group).map(|x| x.2));
        let (source, (samples, dist)) = if own.0 > 0 {
            (PrescriptionSource::Group, own)
        } else {
            let pooled = distribution(coded.iter().filter(|x| x.0 == state).map(|x| x.2));
            if pooled.0 > 0 {
                (PrescriptionSource::Pooled, pooled)
            } else {
                (PrescriptionSource::Global, global.clone())
            }
        };
        states.insert(*state, StatePrescription { group, source, samples, distribution: dist });
    }
    Ok(PrescriptionPolicy { states })
}
