//! Seeded, addressable random streams.
//!
//! Every draw in the crate is taken from a stream addressed by
//! `(seed, path)`, where the path names what the draw is for (for example
//! `[SEQUENCE, i, ITEM, j]`). A stream does not depend on how many draws
//! other streams consumed, so sequence `i`, item `j` is reproducible on its
//! own and work can be split across threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream labels used across the crate.
pub mod label {
    pub const SEQUENCE_ORDER: u64 = 0x5345_514f;
    pub const RECOMMENDATION: u64 = 0x5245_4331;
    pub const USER: u64 = 0x5553_4552;
    pub const ASSIGNMENT: u64 = 0x4153_4731;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const DATASET: u64 = 0x4441_5441;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit key for `(seed, path)`.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0xA5A5_A5A5))))
}

/// Opens the stream addressed by `(seed, path)`.
pub fn substream(seed: u64, path: &[u64]) -> StreamRng {
    let mut key = derive_key(seed, path);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        key = splitmix64(key);
        chunk.copy_from_slice(&key.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
