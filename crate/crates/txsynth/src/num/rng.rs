//! Seeded random streams with a fixed, portable algorithm.
//!
//! A `RngStream` is a ChaCha8 cipher stream. The 256-bit ChaCha key is the
//! 64-bit seed expanded through four rounds of SplitMix64, so the mapping
//! from seed to sample sequence does not depend on any library's seeding
//! convention. Normal variates come from the Box-Muller transform of
//! uniform draws, uniform integers from unbiased rejection sampling, and
//! shuffles from Fisher-Yates over those integers. All of it is pinned
//! here: the same seed yields the same sequence on every platform.
//!
//! Streams are single-owner. Code that needs several independent sources
//! of randomness derives substreams from one root seed instead of sharing
//! a stream; substream derivation uses only the stored seed, never the
//! stream position, so a substream can be re-derived at any time.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::num::Matrix;

const TWO_POW_NEG53: f64 = 1.0 / 9007199254740992.0; // 2^-53

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes; used to turn substream labels into salts.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut s = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    splitmix64(&mut s)
}

/// Deterministic pseudo-random stream (ChaCha8 keyed from a 64-bit seed).
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        RngStream { seed, rng: ChaCha8Rng::from_seed(key), spare_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for a named purpose, derived from the root seed.
    pub fn substream(&self, label: &str) -> RngStream {
        RngStream::new(mix(self.seed, fnv1a(label.as_bytes())))
    }

    /// Independent stream for an indexed unit of work (client, epoch, ...).
    pub fn substream_index(&self, index: u64) -> RngStream {
        RngStream::new(mix(self.seed, index.wrapping_add(0x5851_F42D_4C95_7F2D)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG53
    }

    /// Uniform draw in `(0, 1]`; safe as a log argument.
    fn next_uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG53
    }

    /// Standard normal via Box-Muller; generates pairs and caches the spare.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_uniform_open();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Unbiased uniform integer in `[0, n)`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let threshold = n.wrapping_neg() % n; // 2^64 mod n
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            slice.swap(i, j);
        }
    }
}

/// Matrix of i.i.d. standard normal entries, row-major draw order.
pub fn gaussian_sample(rng: &mut RngStream, rows: usize, cols: usize) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::usage(format!(
            "gaussian_sample requires rows, cols >= 1 (got {rows}x{cols})"
        )));
    }
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.next_normal()).collect();
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(7);
        let mut b = RngStream::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn gaussian_sample_deterministic_per_seed() {
        let m1 = gaussian_sample(&mut RngStream::new(42), 4, 5).unwrap();
        let m2 = gaussian_sample(&mut RngStream::new(42), 4, 5).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn different_seeds_differ() {
        let m1 = gaussian_sample(&mut RngStream::new(1), 3, 3).unwrap();
        let m2 = gaussian_sample(&mut RngStream::new(2), 3, 3).unwrap();
        assert_ne!(m1, m2);
    }

    #[test]
    fn gaussian_moments() {
        let m = gaussian_sample(&mut RngStream::new(123), 10_000, 1).unwrap();
        let n = m.data().len() as f64;
        let mean = m.data().iter().sum::<f64>() / n;
        let var = m.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn gaussian_sample_rejects_empty() {
        assert!(gaussian_sample(&mut RngStream::new(0), 0, 3).is_err());
        assert!(gaussian_sample(&mut RngStream::new(0), 3, 0).is_err());
    }

    #[test]
    fn substreams_are_independent_of_position() {
        let mut root = RngStream::new(9);
        let before = root.substream("x");
        root.next_u64();
        let after = root.substream("x");
        let mut b = before;
        let mut a = after;
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn labeled_substreams_differ() {
        let root = RngStream::new(9);
        let mut a = root.substream("alpha");
        let mut b = root.substream("beta");
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn next_below_in_range() {
        let mut rng = RngStream::new(5);
        for _ in 0..1000 {
            assert!(rng.next_below(7) < 7);
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = RngStream::new(11);
        let mut v: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
