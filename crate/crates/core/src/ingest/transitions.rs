use serde::{Deserialize, Serialize};

use super::dictionary::Dictionaries;
use super::grouping::PhysicianGrouping;
use super::records::EpisodeRecord;
use super::state::{episode_states, StateId, StateSpace};
use crate::error::{Error, Result};

/// One `(s, a, c, s')` sample with a back-reference to its claim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateId,
    pub action: usize,
    pub cost: f64,
    pub next: StateId,
    /// Index into [`TransitionDataset::episode_ids`].
    pub episode: usize,
    /// Claim position within the episode.
    pub position: usize,
    pub procedure_code: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub space: StateSpace,
    pub actions: usize,
    pub samples: Vec<Transition>,
    pub episode_ids: Vec<String>,
    pub episode_physicians: Vec<String>,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First state of every episode, in episode order.
    pub fn initial_states(&self) -> Vec<StateId> {
        self.samples.iter().filter(|t| t.position == 0).map(|t| t.state).collect()
    }

    pub fn mean_cost(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().map(|t| t.cost).sum::<f64>() / self.samples.len() as f64
        }
    }

    pub fn content_hash(&self) -> String {
        crate::hashing::sha256_json(&self.samples)
    }
}

/// Turn every episode of `L` claims into `L` quadruples, the last one
/// entering TERMINAL. The action is the group of the episode's physician.
pub fn extract_transitions(
    episodes: &[EpisodeRecord],
    grouping: &PhysicianGrouping,
    max_inpatient: usize,
    dict: &Dictionaries,
) -> Result<TransitionDataset> {
    let space = StateSpace::new(dict.diagnosis_count(), max_inpatient);
    let mut samples = Vec::with_capacity(episodes.iter().map(EpisodeRecord::len).sum());
    for (e, episode) in episodes.iter().enumerate() {
        let action = grouping.group_of(&episode.physician_id).ok_or_else(|| {
            Error::Lookup(format!(
                "physician {} of episode {} is not in the grouping",
                episode.physician_id, episode.episode_id
            ))
        })?;
        let states = episode_states(episode, max_inpatient, dict)?;
        for (t, claim) in episode.claims.iter().enumerate() {
            samples.push(Transition {
                state: states[t],
                action,
                cost: claim.claim_cost,
                next: states[t + 1],
                episode: e,
                position: t,
                procedure_code: claim.procedure_code.clone(),
            });
        }
    }
    Ok(TransitionDataset {
        space,
        actions: grouping.j,
        samples,
        episode_ids: episodes.iter().map(|e| e.episode_id.clone()).collect(),
        episode_physicians: episodes.iter().map(|e| e.physician_id.clone()).collect(),
    })
}
