//! Seeded randomness.
//!
//! All randomness in the crate comes from [`SeededRng`], ChaCha with 8 rounds
//! (`rand_chacha::ChaCha8Rng`), a 64-bit-seedable generator whose output
//! stream is stable across releases. Independent streams for different
//! purposes (initialization, batch sampling, generation) are derived from a
//! run seed with [`derive_seed`].

pub type SeededRng = rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer applied to `seed ^ hash(tag)`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
