//! Portable, seedable random streams.
//!
//! All randomness goes through ChaCha8 with an explicit 64-bit seed and a
//! stream id, and every derived distribution (uniform, normal, shuffles) is
//! computed here from raw `u64` draws using `libm`, so sample sequences are
//! identical across platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type PortableRng = ChaCha8Rng;

/// Identifier of the generator behind [`RngState`].
pub const ALGORITHM: &str = "chacha8";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, stream: 0 }
    }

    /// Child stream identified by `tag`. Distinct tags give independent streams.
    pub fn derive(&self, tag: u64) -> Self {
        RngState {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0xA5A5_5A5A))),
        }
    }

    /// A plain seed drawn from this stream, for APIs that take a `u64`.
    pub fn seed_value(&self) -> u64 {
        self.rng().next_u64()
    }

    pub fn rng(&self) -> PortableRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = 1.0 - uniform(rng); // (0, 1]
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
}

/// Unbiased index in `0..n`.
pub fn index(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "index range must be non-empty");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Log-uniform draw in `[low, high]`.
pub fn log_uniform(rng: &mut impl RngCore, low: f64, high: f64) -> f64 {
    let (a, b) = (libm::log(low), libm::log(high));
    libm::exp(a + (b - a) * uniform(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_state_same_sequence() {
        let s = RngState::new(42).derive(3);
        let a: Vec<u64> = (0..5).map({ let mut r = s.rng(); move |_| r.next_u64() }).collect();
        let b: Vec<u64> = (0..5).map({ let mut r = s.rng(); move |_| r.next_u64() }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn derived_streams_differ() {
        let s = RngState::new(42);
        assert_ne!(s.derive(0).rng().next_u64(), s.derive(1).rng().next_u64());
        assert_ne!(s.derive(0), s);
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngState::new(7).rng();
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut rng = RngState::new(1).rng();
        let mut v: Vec<usize> = (0..50).collect();
        shuffle(&mut rng, &mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
