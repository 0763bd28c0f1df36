//! Claims ingestion: parsing, episode assembly, MDP state construction,
//! physician grouping and transition extraction.

mod dictionary;
mod episodes;
mod grouping;
mod parse;
mod records;
mod state;
mod transitions;

pub use dictionary::{CategoryDictionary, Dictionaries, UNKNOWN_LABEL};
pub use episodes::{assemble_episodes, AssemblyConfig, AssemblyReport, CostMismatch};
pub use grouping::{group_physicians, PhysicianGrouping};
pub use parse::{parse_claims, write_claims, ClaimsTable, SchemaConfig, CLAIMS_COLUMNS};
pub use records::{ClaimId, ClaimRecord, EpisodeRecord};
pub use state::{build_state, episode_states, StateId, StateSpace};
pub use transitions::{extract_transitions, Transition, TransitionDataset};
