// SPDX-License-Identifier: Apache-2.0

//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a seed derived from coordinates, never from execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One round of the splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of coordinates into a child seed of `root`.
pub fn derive(root: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(root), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
