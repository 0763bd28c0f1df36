//! Value iteration over the estimated MDP and policy extraction.

mod iterate;
mod policy;
mod prescription;
mod reduced;

pub use iterate::{q_values, value_iteration, SolverConfig, ValueVector};
pub use policy::{extract_policy, GroupPolicy};
pub use prescription::{derive_prescription_policy, PrescriptionPolicy, PrescriptionSource, StatePrescription};
pub use reduced::solve_reduced;
