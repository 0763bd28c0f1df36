//! Offline reinforcement learning for clinical pathways.
//!
//! The pipeline turns episodic claims into transition quadruples, compresses
//! the state space with spectral features and k-means, estimates a kernel
//! smoothed MDP, solves it by value iteration and evaluates the resulting
//! physician-group policy by Monte-Carlo simulation.

pub mod cli;
pub mod config;
pub mod error;
pub mod hashing;
pub mod ingest;
pub mod kernel;
pub mod metrics;
pub mod seeding;
pub mod sim;
pub mod solver;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{
    ClaimRecord, EpisodeRecord, PhysicianGrouping, StateId, StateSpace, Transition,
    TransitionDataset,
};
pub use kernel::{EmpiricalMdp, KernelSpec};
pub use solver::{GroupPolicy, PrescriptionPolicy, ValueVector};
pub use spectral::{SpectralFeatures, StatePartition};
