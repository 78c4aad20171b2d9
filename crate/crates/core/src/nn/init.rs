//! Parameter initialization.

use rand_chacha::ChaCha8Rng;

use crate::rng::uniform_f32;
use crate::scalar::Scalar;

/// Kaiming-uniform (fan-in, ReLU gain): draws from U(−b, b) with
/// b = sqrt(6 / fan_in). Biases are initialized to zero elsewhere.
pub fn kaiming_uniform<S: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, len: usize) -> Vec<S> {
    assert!(fan_in > 0);
    let bound = (6.0 / fan_in as f32).sqrt();
    (0..len)
        .map(|_| S::from_f32((2.0 * uniform_f32(rng) - 1.0) * bound))
        .collect()
}
