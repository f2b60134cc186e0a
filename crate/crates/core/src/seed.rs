//! Stable seed derivation.
//!
//! Per-utterance and per-step seeds are derived by hashing, so results never
//! depend on the order in which utterances are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Builder for a hash over a sequence of labelled parts.
#[derive(Debug, Clone, Copy)]
pub struct SeedHasher(u64);

impl SeedHasher {
    pub fn new(seed: u64) -> Self {
        SeedHasher(splitmix64(seed ^ FNV_OFFSET))
    }

    pub fn bytes(mut self, bytes: &[u8]) -> Self {
        let mut h = FNV_OFFSET;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        // length suffix keeps ("ab","c") distinct from ("a","bc")
        self.0 = splitmix64(self.0 ^ h ^ (bytes.len() as u64).rotate_left(32));
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0 = splitmix64(self.0 ^ splitmix64(v));
        self
    }

    pub fn finish(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> Rng {
        Rng::seed_from_u64(self.0)
    }
}

/// `hash(global_seed, utt_id)`.
pub fn utterance_seed(global: u64, utt_id: &str) -> u64 {
    SeedHasher::new(global).str(utt_id).finish()
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
