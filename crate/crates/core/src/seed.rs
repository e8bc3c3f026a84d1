//! Seed derivation.
//!
//! Every random stream is derived from one 64-bit root seed:
//! `subsystem_seed = splitmix64(root ^ fnv1a64(name))`. Streams with
//! distinct names are independent of the order in which they are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(root: u64, subsystem: &str) -> u64 {
    splitmix64(root ^ fnv1a64(subsystem.as_bytes()))
}

pub fn rng_for(root: u64, subsystem: &str) -> Rng {
    Rng::seed_from_u64(derive(root, subsystem))
}
