//! Seeded randomness. Every stochastic operation takes an explicit generator;
//! the algorithm is ChaCha with 8 rounds, seeded from a 64-bit value through
//! `SeedableRng::seed_from_u64`, so streams are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type NnRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> NnRng {
    ChaCha8Rng::seed_from_u64(seed)
}
