//! Seeded, splittable randomness.
//!
//! Every stochastic routine in the crate takes a [`RandomSource`]. A source is
//! a ChaCha20 stream keyed by a 256-bit key derived from the seed. Children
//! are derived by hashing the parent key with a label (named streams) or a
//! counter (anonymous splits), so sibling streams are keyed independently and
//! never overlap.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RandomSource {
    key: [u8; 32],
    splits: u64,
    rng: ChaCha20Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"fmcpe/seed");
        h.update(seed.to_le_bytes());
        Self::from_key(h.finalize().into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Self {
            key,
            splits: 0,
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    fn child_key(&self, tag: &[u8], extra: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((tag.len() as u64).to_le_bytes());
        h.update(tag);
        h.update(extra);
        h.finalize().into()
    }

    /// Named child stream. Does not advance `self`; the same label always
    /// yields the same stream.
    pub fn stream(&self, label: &str) -> RandomSource {
        Self::from_key(self.child_key(b"stream", label.as_bytes()))
    }

    /// Named child stream indexed by an integer, e.g. a test-point id.
    pub fn stream_indexed(&self, label: &str, index: u64) -> RandomSource {
        let mut extra = label.as_bytes().to_vec();
        extra.extend_from_slice(&index.to_le_bytes());
        Self::from_key(self.child_key(b"indexed", &extra))
    }

    /// Anonymous child stream; successive calls give distinct children.
    pub fn split(&mut self) -> RandomSource {
        let n = self.splits;
        self.splits += 1;
        Self::from_key(self.child_key(b"split", &n.to_le_bytes()))
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Uniformly random permutation of `0..n` (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
