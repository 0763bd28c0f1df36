//! Spectral state compression: transition counts, row normalization, top-k
//! right singular vectors and best-of-restarts k-means state partitioning.

mod frequency;
mod kmeans;
mod partition;
mod svd;

pub use frequency::{count_frequencies, normalize_rows, EmpiricalTransitionMatrix, FrequencyMatrix, ZeroRowRule};
pub use kmeans::{kmeans_best_of, KMeansFit};
pub use partition::{cluster_states, StatePartition};
pub use svd::{top_right_singular_vectors, SpectralDecomposition, SpectralFeatures};

use crate::error::Result;
use crate::ingest::TransitionDataset;

/// SVD of the row-normalized transition matrix over the observed states
/// (plus TERMINAL) of `dataset`.
pub fn support_decomposition(dataset: &TransitionDataset) -> Result<SpectralDecomposition> {
    let freq = count_frequencies(dataset);
    let support = freq.support();
    SpectralDecomposition::new(&normalize_rows(&freq.restrict(&support), ZeroRowRule::SelfLoop))
}

/// Markov features of rank `k` and the best-of-`restarts` k-means partition.
pub fn compress(
    dataset: &TransitionDataset,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<(SpectralFeatures, StatePartition)> {
    let features = support_decomposition(dataset)?.features(k)?;
    let partition = cluster_states(&features, k, restarts, seed)?;
    Ok((features, partition))
}
