//! Seeded, platform-stable random streams.
//!
//! The generator is ChaCha8 keyed with `SHA-256("probe-rng/v1" || seed_le)`.
//! Floating-point draws use the top 53 bits of `next_u64`, and bounded
//! integers use rejection sampling, so a stream is fully determined by its
//! seed and does not depend on any distribution code outside this module.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Name of the stream algorithm, recorded in every manifest.
pub const RNG_ALGORITHM: &str = "chacha8/sha256-key/v1";

/// Derive a child seed from a parent seed and a label.
///
/// Used to give every trial (and every cell inside a trial) its own
/// independent stream, so generation order does not matter.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"probe-seed/v1");
    h.update(parent.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

#[derive(Clone, Debug)]
pub struct StimRng {
    inner: ChaCha8Rng,
}

impl StimRng {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"probe-rng/v1");
        h.update(seed.to_le_bytes());
        let d = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&d[..32]);
        StimRng {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Stream for `label` under `parent`; shorthand for `new(derive_seed(..))`.
    pub fn derived(parent: u64, label: &str) -> Self {
        Self::new(derive_seed(parent, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // largest multiple of n that fits, reject the tail
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, uniformly without replacement,
    /// returned in ascending order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        let mut out = pool[..k].to_vec();
        out.sort_unstable();
        out
    }
}
