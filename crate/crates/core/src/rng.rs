//! Seed derivation. Every parallel job owns a ChaCha stream whose seed is a
//! pure function of the master seed and the job's coordinates, so results do
//! not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`, one splitmix round per part.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, parts))
}

// Job-kind tags keep streams of different subsystems apart.
pub(crate) const TAG_FLOC: u64 = 0x464c_4f43;
pub(crate) const TAG_REFERENCE: u64 = 0x5245_4652;
pub(crate) const TAG_REFERENCE_RUN: u64 = 0x5252_554e;
