//! Reproducible random streams.
//!
//! Every chain owns an independent ChaCha stream selected by index from the
//! run seed; keyed sub-streams are derived by mixing keys into the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

pub type ChainRng = ChaCha8Rng;

/// Stream `stream` of the generator seeded by `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derived 64-bit seed for the sub-stream `keys` under `seed`.
pub fn mix_keys(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix(seed), |acc, k| splitmix(acc ^ splitmix(*k)))
}

pub fn mix(seed: u64, key: u64) -> u64 {
    mix_keys(seed, &[key])
}

/// Generator for the sub-stream identified by `keys` under `seed`.
pub fn keyed_rng(seed: u64, keys: &[u64]) -> ChainRng {
    ChaCha8Rng::seed_from_u64(mix_keys(seed, keys))
}

pub fn draw_velocity<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn draw_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}
