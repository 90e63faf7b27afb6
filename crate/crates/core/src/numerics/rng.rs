use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Name of the generator, echoed into experiment reports.
pub const PRNG_ALGORITHM: &str = "ChaCha20 (rand_chacha), substreams keyed by FNV-1a + SplitMix64";

/// Seeded pseudo-random generator with labeled substreams.
///
/// A substream depends only on the seed of its parent and its key, never on
/// how many numbers the parent has already produced. Adding a new consumer
/// therefore leaves every existing stream untouched.
#[derive(Debug, Clone)]
pub struct Prng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for the given purpose, e.g. `"init"` or `"shuffle"`.
    pub fn substream(&self, key: &str) -> Prng {
        Prng::new(derive_seed(self.seed, key))
    }

    /// Substream keyed by an integer index (bootstrap member `i`, repeat `r`, ...).
    pub fn substream_indexed(&self, key: &str, index: u64) -> Prng {
        Prng::new(splitmix64(derive_seed(self.seed, key) ^ splitmix64(index)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform sample in `[low, high)`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }
}

/// Seed for the substream `key` of a stream seeded with `seed`.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(key.as_bytes()))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
