//! Seeded random streams.
//!
//! Every stochastic task draws from its own ChaCha stream keyed by the root
//! seed and a stable hash of a task path (`"round/3/client/17"`). Work can be
//! scheduled on any number of threads without changing a single draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a over the path bytes. Stable across builds and platforms.
pub fn stable_hash(path: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in path.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A root seed plus a task path; derives independent generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
    path: String,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: String::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Sub-namespace for a task family.
    pub fn child(&self, name: impl std::fmt::Display) -> Self {
        let path = if self.path.is_empty() {
            name.to_string()
        } else {
            format!("{}/{}", self.path, name)
        };
        Self {
            seed: self.seed,
            path,
        }
    }

    /// Generator for `name` under this namespace.
    pub fn rng(&self, name: impl std::fmt::Display) -> Rng {
        let full = self.child(name);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stable_hash(&full.path));
        rng
    }
}
