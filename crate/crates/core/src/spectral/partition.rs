use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::kmeans::kmeans_best_of;
use super::svd::SpectralFeatures;
use crate::error::{Error, Result};
use crate::ingest::{StateId, StateSpace};

/// Hard partition of the full state space into `k` clinical blocks plus the
/// TERMINAL singleton at block index `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePartition {
    pub space: StateSpace,
    pub k: usize,
    /// Block index per state, in state-space order.
    pub blocks: Vec<usize>,
    /// States whose block came from clustering (the rest were attached by
    /// diagnosis proximity).
    pub clustered: Vec<bool>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    pub singular_values: Vec<f64>,
}

impl StatePartition {
    /// Build from a block assignment of some clinical states. States not
    /// listed are attached to the block of the observed state with the same
    /// diagnosis and nearest inpatient count, or else to the largest block.
    pub fn from_assignment(space: StateSpace, k: usize, assigned: &[(StateId, usize)]) -> Result<Self> {
        let n = space.len();
        let mut blocks = vec![usize::MAX; n];
        let mut clustered = vec![false; n];
        for (s, b) in assigned {
            if *b >= k {
                return Err(Error::Lookup(format!("block {b} out of range for k = {k}")));
            }
            let i = space.index(s).ok_or_else(|| Error::Lookup(format!("state {s} outside the state space")))?;
            if s.is_terminal() {
                continue;
            }
            blocks[i] = *b;
            clustered[i] = true;
        }
        let mut sizes = vec![0usize; k];
        for (&b, &c) in blocks.iter().zip(&clustered) {
            if c {
                sizes[b] += 1;
            }
        }
        let largest = (0..k).fold(0, |best, b| if sizes[b] > sizes[best] { b } else { best });
        let width = space.max_inpatient + 1;
        for i in 0..space.clinical_len() {
            if clustered[i] {
                continue;
            }
            let (d, c) = (i / width, i % width);
            let mut pick: Option<(usize, usize)> = None;
            for other in 0..width {
                let j = d * width + other;
                if clustered[j] {
                    let dist = other.abs_diff(c);
                    if pick.is_none_or(|(best, _)| dist < best) {
                        pick = Some((dist, blocks[j]));
                    }
                }
            }
            blocks[i] = pick.map_or(largest, |(_, b)| b);
        }
        blocks[space.terminal_index()] = k;
        Ok(Self {
            space,
            k,
            blocks,
            clustered,
            centroids: Vec::new(),
            objective: 0.0,
            singular_values: Vec::new(),
        })
    }

    /// Every state in its own block (the plain empirical model).
    pub fn singletons(space: StateSpace) -> Self {
        let k = space.clinical_len();
        let assigned: Vec<(StateId, usize)> = (0..k).map(|i| (space.state(i), i)).collect();
        Self::from_assignment(space, k, &assigned).expect("singleton blocks are in range")
    }

    pub fn num_blocks(&self) -> usize {
        self.k + 1
    }

    pub fn block_of(&self, state: &StateId) -> Option<usize> {
        self.space.index(state).map(|i| self.blocks[i])
    }

    /// State indices per block, TERMINAL block last.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_blocks()];
        for (i, &b) in self.blocks.iter().enumerate() {
            members[b].push(i);
        }
        members
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    space: StateSpace,
    k: usize,
    objective: f64,
    singular_values: Vec<f64>,
    centroids: Vec<Vec<f64>>,
    blocks: OrderedBlocks,
    clustered: Vec<StateId>,
}

/// `{state_key: block}` written in state-space order.
struct OrderedBlocks(Vec<(StateId, usize)>);

impl Serialize for OrderedBlocks {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (s, b) in &self.0 {
            map.serialize_entry(&s.to_string(), b)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for OrderedBlocks {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: BTreeMap<StateId, usize> = BTreeMap::deserialize(deserializer)?;
        Ok(OrderedBlocks(raw.into_iter().collect()))
    }
}

impl Serialize for StatePartition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PartitionFile {
            space: self.space,
            k: self.k,
            objective: self.objective,
            singular_values: self.singular_values.clone(),
            centroids: self.centroids.clone(),
            blocks: OrderedBlocks(self.blocks.iter().enumerate().map(|(i, &b)| (self.space.state(i), b)).collect()),
            clustered: (0..self.space.len())
                .filter(|&i| self.clustered[i])
                .map(|i| self.space.state(i))
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StatePartition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = PartitionFile::deserialize(deserializer)?;
        let space = file.space;
        let mut blocks = vec![usize::MAX; space.len()];
        for (s, b) in file.blocks.0 {
            let i = space.index(&s).ok_or_else(|| D::Error::custom(format!("state {s} outside space")))?;
            blocks[i] = b;
        }
        if blocks.iter().any(|&b| b > file.k) {
            return Err(D::Error::custom("partition does not cover the state space"));
        }
        let mut clustered = vec![false; space.len()];
        for s in file.clustered {
            if let Some(i) = space.index(&s) {
                clustered[i] = true;
            }
        }
        Ok(StatePartition {
            space,
            k: file.k,
            blocks,
            clustered,
            centroids: file.centroids,
            objective: file.objective,
            singular_values: file.singular_values,
        })
    }
}

/// Partition the clinical states carried by `features` into `k` blocks with
/// best-of-`restarts` k-means on the raw feature rows.
pub fn cluster_states(features: &SpectralFeatures, k: usize, restarts: usize, seed: u64) -> Result<StatePartition> {
    let rows: Vec<(StateId, Vec<f64>)> = features
        .states
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_terminal())
        .map(|(i, s)| (*s, features.vectors.row(i).iter().copied().collect()))
        .collect();
    let distinct: HashSet<Vec<u64>> = rows.iter().map(|(_, r)| r.iter().map(|x| x.to_bits()).collect()).collect();
    if k == 0 || distinct.len() < k {
        return Err(Error::Infeasible { distinct: distinct.len(), k });
    }
    let points: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.clone()).collect();
    let fit = kmeans_best_of(&points, k, restarts, seed);
    let assigned: Vec<(StateId, usize)> = rows.iter().map(|(s, _)| *s).zip(fit.assignment.iter().copied()).collect();
    let mut partition = StatePartition::from_assignment(features.space, k, &assigned)?;
    partition.centroids = fit.centroids;
    partition.objective = fit.objective;
    partition.singular_values = features.singular_values.clone();
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn features(rows: &[[f64; 2]]) -> SpectralFeatures {
        let space = StateSpace::new(rows.len(), 0);
        let mut states = space.states();
        let n = rows.len();
        states.truncate(n);
        states.push(StateId::Terminal);
        let vectors = DMatrix::from_fn(n + 1, 2, |r, c| if r < n { rows[r][c] } else { 0.5 });
        SpectralFeatures { space, states, vectors, singular_values: vec![1.0, 0.5] }
    }

    #[test]
    fn identical_rows_share_a_block() {
        let f = features(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.2, 0.9]]);
        for seed in 0..10 {
            let p = cluster_states(&f, 2, 5, seed).unwrap();
            assert_eq!(p.blocks[0], p.blocks[1]);
            assert_eq!(p.blocks[p.space.terminal_index()], 2);
        }
    }

    #[test]
    fn too_few_distinct_rows() {
        let f = features(&[[1.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(cluster_states(&f, 2, 3, 0), Err(Error::Infeasible { distinct: 1, k: 2 })));
    }

    #[test]
    fn unclustered_states_follow_their_diagnosis() {
        let space = StateSpace::new(3, 2);
        let assigned = [(StateId::clinical(0, 0), 1), (StateId::clinical(1, 2), 0), (StateId::clinical(2, 0), 1)];
        let p = StatePartition::from_assignment(space, 2, &assigned).unwrap();
        assert_eq!(p.block_of(&StateId::clinical(0, 2)), Some(1));
        assert_eq!(p.block_of(&StateId::clinical(1, 0)), Some(0));
        assert_eq!(p.block_of(&StateId::Terminal), Some(2));
        assert!(p.clustered[0] && !p.clustered[1]);
    }

    #[test]
    fn json_round_trip() {
        let f = features(&[[1.0, 0.0], [0.0, 1.0], [0.1, 0.9]]);
        let p = cluster_states(&f, 2, 4, 3).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"0:0\""));
        let back: StatePartition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
