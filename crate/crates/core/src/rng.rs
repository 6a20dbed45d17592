//! Seeded random streams.
//!
//! A run owns one master seed. Every consumer (initialisation, exemplar
//! sampling, fallbacks, scripted agents) draws from its own named substream so
//! that adding draws in one place never shifts the sequence seen by another.

use rand::{Error, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// splitmix64 finaliser.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to turn stream names into keys.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic generator handed explicitly to every randomised operation.
#[derive(Debug, Clone)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent substream derived from `(master, name)`.
    pub fn substream(master: u64, name: &str) -> Self {
        Self::new(mix64(master ^ fnv1a(name.as_bytes())))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// Names of the substreams a search run fans out to.
pub mod streams {
    pub const INIT: &str = "init";
    pub const XI_SAMPLING: &str = "xi-sampling";
    pub const FALLBACK: &str = "fallback";
    pub const AGENT: &str = "agent";
    pub const BASELINE: &str = "baseline";
}
