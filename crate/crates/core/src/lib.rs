//! Genetic search for complementary activation functions placed in front of
//! the sign binarization of a binary neural network.
//!
//! - [`expr`]: genome encoding, operator tables, decoding and differentiation
//! - [`bnn`]: binary network training and inference primitives
//! - [`fitness`]: genome scoring with early rejection and caching
//! - [`ga`]: steady-state genetic algorithm
//! - [`cli`]: configuration, datasets, and command implementations

pub mod bnn;
pub mod cli;
pub mod expr;
pub mod fitness;
pub mod ga;
pub mod tensor;

pub use tensor::Tensor;

/// SplitMix64 finalizer; used wherever a seed or key is derived by hashing.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Platform-independent 64-bit hash of a byte string (chained [`mix64`]).
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h = mix64(bytes.len() as u64);
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = mix64(h ^ u64::from_le_bytes(word));
    }
    h
}
