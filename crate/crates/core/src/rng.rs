//! Deterministic randomness: every random choice in the laboratory flows from
//! an explicit seed through a named, derived ChaCha8 stream, so reruns are
//! bitwise reproducible and independent choices never share a stream.

pub use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Derives an independent seed from a base seed, a purpose tag, and a salt
/// (cycle index, epoch index, ...). Different tags or salts give unrelated
/// streams even for equal base seeds.
pub fn derive_seed(base: u64, tag: &str, salt: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a over the tag bytes
    for &b in tag.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(base ^ h) ^ salt)
}

/// A ChaCha8 generator for the derived stream `(base, tag, salt)`.
pub fn stream(base: u64, tag: &str, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, salt))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform f32 in [0, 1) with 24 bits of precision.
#[inline]
pub fn uniform_f32(rng: &mut ChaCha8Rng) -> f32 {
    (rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
}

/// Uniform f64 in [0, 1) with 53 bits of precision.
#[inline]
pub fn uniform_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in [0, n); unbiased via rejection sampling.
pub fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    assert!(n > 0, "below(0) is undefined");
    let n = n as u64;
    let limit = u64::MAX - u64::MAX % n;
    loop {
        let r = rng.next_u64();
        if r < limit {
            return (r % n) as usize;
        }
    }
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, slice: &mut [T]) {
    for i in (1..slice.len()).rev() {
        let j = below(rng, i + 1);
        slice.swap(i, j);
    }
}

/// Standard normal draw (Box–Muller, cosine branch).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - uniform_f64(rng); // (0, 1], keeps ln finite
    let u2 = uniform_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
