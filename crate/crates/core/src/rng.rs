//! Seed tree and random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] seeded with
//! a 64-bit value derived from a master seed through [`child_seed`]. ChaCha output
//! is platform independent, so golden values are portable. Gaussian draws use the
//! ziggurat sampler of `rand_distr::StandardNormal`; uniform draws use the
//! `rand` `Uniform`/`random` implementations. Both are fixed by the pinned
//! crate versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Stable child seed for `(parent, label, index)`.
///
/// The label hash is FNV-1a and the combination is two SplitMix64 rounds, so the
/// value never depends on the std hasher or on the order in which children are
/// requested. Adding a new label leaves every existing stream unchanged.
pub fn child_seed(parent: u64, label: &str, index: u64) -> u64 {
    mix64(mix64(parent ^ fnv1a(label)) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Child seed addressed by a path of indices, e.g. `(repeat, client)`.
pub fn path_seed(parent: u64, label: &str, path: &[u64]) -> u64 {
    let mut seed = child_seed(parent, label, path.len() as u64);
    for &idx in path {
        seed = child_seed(seed, label, idx);
    }
    seed
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_standard_normal(rng: &mut Stream, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// Uniform draw in `[0, 1)`.
pub fn unit_uniform(rng: &mut Stream) -> f64 {
    rand::Rng::random::<f64>(rng)
}
