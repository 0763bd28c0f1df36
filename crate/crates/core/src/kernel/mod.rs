//! Kernel-smoothed estimation of the empirical MDP.

mod estimate;
mod mdp;
mod spec;

pub use estimate::{build_empirical_mdp, estimate_cost, estimate_transition_row, TargetNormalization};
pub use mdp::{EmpiricalMdp, FallbackCounts, MdpProvenance};
pub use spec::{kernel_eval, KernelSpec};
