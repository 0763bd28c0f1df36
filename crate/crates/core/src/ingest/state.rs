use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::dictionary::Dictionaries;
use super::records::EpisodeRecord;
use crate::error::{Error, Result};

/// MDP state: most recent diagnosis category and a capped count of inpatient
/// claims so far, or the absorbing terminal state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateId {
    Clinical { diagnosis: u32, inpatient: u32 },
    Terminal,
}

impl StateId {
    pub fn clinical(diagnosis: usize, inpatient: usize) -> Self {
        StateId::Clinical { diagnosis: diagnosis as u32, inpatient: inpatient as u32 }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, StateId::Terminal)
    }

    pub fn diagnosis(&self) -> Option<usize> {
        match self {
            StateId::Clinical { diagnosis, .. } => Some(*diagnosis as usize),
            StateId::Terminal => None,
        }
    }

    pub fn inpatient(&self) -> Option<usize> {
        match self {
            StateId::Clinical { inpatient, .. } => Some(*inpatient as usize),
            StateId::Terminal => None,
        }
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateId::Clinical { diagnosis, inpatient } => write!(f, "{diagnosis}:{inpatient}"),
            StateId::Terminal => f.write_str("TERMINAL"),
        }
    }
}

impl FromStr for StateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "TERMINAL" {
            return Ok(StateId::Terminal);
        }
        let bad = || Error::Lookup(format!("malformed state key `{s}`"));
        let (d, c) = s.split_once(':').ok_or_else(bad)?;
        Ok(StateId::Clinical {
            diagnosis: d.parse().map_err(|_| bad())?,
            inpatient: c.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for StateId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The full state space: `diagnoses × (max_inpatient + 1)` clinical states
/// followed by TERMINAL at the last index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub diagnoses: usize,
    pub max_inpatient: usize,
}

impl StateSpace {
    pub fn new(diagnoses: usize, max_inpatient: usize) -> Self {
        Self { diagnoses, max_inpatient }
    }

    pub fn clinical_len(&self) -> usize {
        self.diagnoses * (self.max_inpatient + 1)
    }

    pub fn len(&self) -> usize {
        self.clinical_len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn terminal_index(&self) -> usize {
        self.clinical_len()
    }

    pub fn index(&self, state: &StateId) -> Option<usize> {
        match *state {
            StateId::Terminal => Some(self.terminal_index()),
            StateId::Clinical { diagnosis, inpatient } => {
                let (d, c) = (diagnosis as usize, inpatient as usize);
                (d < self.diagnoses && c <= self.max_inpatient).then(|| d * (self.max_inpatient + 1) + c)
            }
        }
    }

    pub fn state(&self, index: usize) -> StateId {
        if index >= self.clinical_len() {
            StateId::Terminal
        } else {
            let width = self.max_inpatient + 1;
            StateId::clinical(index / width, index % width)
        }
    }

    pub fn states(&self) -> Vec<StateId> {
        (0..self.len()).map(|i| self.state(i)).collect()
    }
}

/// State of `episode` after its first `t + 1` claims; `t == len` is TERMINAL.
pub fn build_state(episode: &EpisodeRecord, t: usize, max_inpatient: usize, dict: &Dictionaries) -> Result<StateId> {
    let len = episode.claims.len();
    if t > len {
        return Err(Error::Precondition(format!("t = {t} beyond episode length {len}")));
    }
    if t == len {
        return Ok(StateId::Terminal);
    }
    let prefix = &episode.claims[..=t];
    let diagnosis = match prefix.iter().rev().find_map(|c| c.diagnosis_category.as_deref()) {
        Some(label) => dict
            .diagnosis_category
            .index_of(label)
            .ok_or_else(|| Error::Lookup(format!("diagnosis category `{label}` not in dictionary")))?,
        None => dict.unknown_diagnosis(),
    };
    let inpatient = prefix.iter().filter(|c| c.inpatient_flag).count().min(max_inpatient);
    Ok(StateId::clinical(diagnosis, inpatient))
}

/// All `len + 1` states of an episode in one pass; equivalent to calling
/// [`build_state`] for every `t`.
pub fn episode_states(episode: &EpisodeRecord, max_inpatient: usize, dict: &Dictionaries) -> Result<Vec<StateId>> {
    let mut states = Vec::with_capacity(episode.claims.len() + 1);
    let mut diagnosis = dict.unknown_diagnosis();
    let mut inpatient = 0usize;
    for claim in &episode.claims {
        if let Some(label) = claim.diagnosis_category.as_deref() {
            diagnosis = dict
                .diagnosis_category
                .index_of(label)
                .ok_or_else(|| Error::Lookup(format!("diagnosis category `{label}` not in dictionary")))?;
        }
        if claim.inpatient_flag {
            inpatient += 1;
        }
        states.push(StateId::clinical(diagnosis, inpatient.min(max_inpatient)));
    }
    states.push(StateId::Terminal);
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ClaimId, ClaimRecord};
    use proptest::prelude::*;

    fn episode(specs: &[(Option<&str>, bool)]) -> EpisodeRecord {
        let claims = specs
            .iter()
            .enumerate()
            .map(|(i, (dx, inpatient))| ClaimRecord {
                episode_id: "e".into(),
                beneficiary_id: "b".into(),
                episode_start_day: 0,
                episode_end_day: 10,
                episode_total_cost: 0.0,
                physician_id: "p".into(),
                claim_id: ClaimId::new(format!("c{i}")),
                claim_start_day: 0,
                claim_end_day: 0,
                claim_cost: 1.0,
                procedure_code: None,
                procedure_category: None,
                diagnosis_code: None,
                diagnosis_category: dx.map(String::from),
                inpatient_flag: *inpatient,
            })
            .collect();
        EpisodeRecord {
            episode_id: "e".into(),
            beneficiary_id: "b".into(),
            physician_id: "p".into(),
            start_day: 0,
            end_day: 10,
            claims,
            total_cost: 0.0,
        }
    }

    fn dict() -> Dictionaries {
        let mut ep = episode(&[(None, false); 10]);
        for (i, c) in ep.claims.iter_mut().enumerate() {
            c.diagnosis_category = Some(format!("D{i}"));
        }
        Dictionaries::from_episodes(&[ep])
    }

    #[test]
    fn key_round_trip() {
        for s in [StateId::Terminal, StateId::clinical(12, 3)] {
            assert_eq!(s.to_string().parse::<StateId>().unwrap(), s);
        }
        assert_eq!(StateId::clinical(12, 3).to_string(), "12:3");
    }

    #[test]
    fn space_indexing_is_bijective() {
        let space = StateSpace::new(138, 4);
        assert_eq!(space.clinical_len(), 690);
        for i in 0..space.len() {
            assert_eq!(space.index(&space.state(i)), Some(i));
        }
        assert_eq!(space.state(space.terminal_index()), StateId::Terminal);
        assert_eq!(space.index(&StateId::clinical(138, 0)), None);
    }

    #[test]
    fn terminal_at_episode_length() {
        let ep = episode(&[(Some("D7"), false)]);
        assert_eq!(build_state(&ep, 1, 4, &dict()).unwrap(), StateId::Terminal);
    }

    #[test]
    fn first_claim_base_case() {
        let ep = episode(&[(Some("D7"), false), (Some("D3"), true)]);
        assert_eq!(build_state(&ep, 0, 4, &dict()).unwrap(), StateId::clinical(7, 0));
        assert_eq!(build_state(&ep, 1, 4, &dict()).unwrap(), StateId::clinical(3, 1));
    }

    #[test]
    fn inpatient_count_capped() {
        let mut specs = vec![(Some("D1"), true); 6];
        specs.push((Some("D2"), false));
        let ep = episode(&specs);
        assert_eq!(build_state(&ep, 6, 4, &dict()).unwrap(), StateId::clinical(2, 4));
    }

    #[test]
    fn missing_diagnosis_carries_forward_or_is_unknown() {
        let d = dict();
        let ep = episode(&[(None, false), (Some("D5"), false), (None, false)]);
        assert_eq!(build_state(&ep, 0, 4, &d).unwrap(), StateId::clinical(d.unknown_diagnosis(), 0));
        assert_eq!(build_state(&ep, 2, 4, &d).unwrap(), StateId::clinical(5, 0));
    }

    proptest! {
        #[test]
        fn single_pass_matches_pointwise(spec in prop::collection::vec((prop::option::of(0usize..10), any::<bool>()), 1..20)) {
            let labels: Vec<Option<String>> = spec.iter().map(|(d, _)| d.map(|i| format!("D{i}"))).collect();
            let specs: Vec<(Option<&str>, bool)> = labels.iter().zip(&spec).map(|(l, (_, f))| (l.as_deref(), *f)).collect();
            let ep = episode(&specs);
            let d = dict();
            let all = episode_states(&ep, 2, &d).unwrap();
            let mut last = 0;
            for t in 0..=ep.claims.len() {
                let s = build_state(&ep, t, 2, &d).unwrap();
                prop_assert_eq!(s, all[t]);
                if let Some(c) = s.inpatient() {
                    prop_assert!(c >= last);
                    last = c;
                }
            }
        }
    }
}
