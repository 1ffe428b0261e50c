//! Bit-packed ±1 vectors and the xnor-popcount inner product.
//!
//! Layout: 64-bit words, least significant bit first, `+1 ↦ 1`, `−1 ↦ 0`.
//! Tail bits past the logical length are zero and masked before popcount.

use super::BnnError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedBits {
    words: Vec<u64>,
    len: usize,
}

impl PackedBits {
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn unpack(&self) -> Vec<f32> {
        (0..self.len)
            .map(|i| {
                if self.words[i / 64] >> (i % 64) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    }
}

/// Packs a slice of `±1` values.
pub fn pack_bits(values: &[f32]) -> Result<PackedBits, BnnError> {
    let mut words = vec![0u64; values.len().div_ceil(64)];
    for (i, &v) in values.iter().enumerate() {
        if v == 1.0 {
            words[i / 64] |= 1 << (i % 64);
        } else if v != -1.0 {
            return Err(BnnError::NotBinary { index: i, value: v });
        }
    }
    Ok(PackedBits {
        words,
        len: values.len(),
    })
}

/// Packs the sign of each value (`x ≥ 0 ↦ 1`).
pub fn pack_signs(values: &[f32]) -> PackedBits {
    let mut words = vec![0u64; values.len().div_ceil(64)];
    for (i, &v) in values.iter().enumerate() {
        if v >= 0.0 {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    PackedBits {
        words,
        len: values.len(),
    }
}

/// `2·popcount(xnor(a, b)) − n` over the first `n` bits, which equals the
/// ±1 dot product.
pub fn xnor_popcount_dot(a: &PackedBits, b: &PackedBits, n: usize) -> Result<i64, BnnError> {
    if a.words.len() != b.words.len() || n > a.len || n > b.len {
        return Err(BnnError::PackedLength {
            left: a.len,
            right: b.len,
            n,
        });
    }
    Ok(xnor_dot_words(&a.words, &b.words, n))
}

pub(crate) fn xnor_dot_words(a: &[u64], b: &[u64], n: usize) -> i64 {
    let full = n / 64;
    let mut matches: u32 = a[..full]
        .iter()
        .zip(&b[..full])
        .map(|(x, y)| (!(x ^ y)).count_ones())
        .sum();
    let rem = n % 64;
    if rem > 0 {
        let mask = (1u64 << rem) - 1;
        matches += (!(a[full] ^ b[full]) & mask).count_ones();
    }
    2 * matches as i64 - n as i64
}
