//! Deterministic per-task seed derivation.
//!
//! Every random task (a k-means restart, a rollout batch, a CV repeat) gets
//! its own generator seeded from `(master, index...)`, so results do not
//! depend on how tasks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TaskRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &i| splitmix64(acc ^ splitmix64(i.wrapping_add(1))))
}

pub fn task_rng(master: u64, path: &[u64]) -> TaskRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
