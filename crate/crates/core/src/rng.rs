//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`SeedStream`]. Sub-streams are
//! derived by mixing a parent seed with a salt, so the draws made for one
//! interval, cell or rollout never depend on how many draws another one made.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from `seed` and a salt.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix64(seed ^ mix64(salt))
}

#[derive(Clone, Debug)]
pub struct SeedStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A stream derived from this stream's seed; does not advance `self`.
    pub fn substream(&self, salt: u64) -> SeedStream {
        SeedStream::new(derive_seed(self.seed, salt))
    }

    /// Uniform index in `0..len`. `len` must be non-zero.
    pub fn index(&mut self, len: usize) -> usize {
        debug_assert!(len > 0);
        self.rng.random_range(0..len)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform in `[lo, hi]`; returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            lo + (hi - lo) * self.unit()
        }
    }

    /// `k` distinct indices from `0..len`, uniformly, in draw order.
    pub fn sample_distinct(&mut self, len: usize, k: usize) -> Vec<usize> {
        let k = k.min(len);
        let mut pool: Vec<usize> = (0..len).collect();
        for i in 0..k {
            let j = i + self.index(len - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
