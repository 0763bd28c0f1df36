//! Synthetic claims from a known block model, and brute-force oracles.

mod generate;
mod model;
mod oracle;

pub use generate::{generate_claims, GroundTruthSidecar, SynthConfig, SynthOutput};
pub use model::{GroundTruthModel, ModelParams};
pub use oracle::{oracle_partition, oracle_value, OracleSolution};
