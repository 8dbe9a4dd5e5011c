//! Keyed random streams.
//!
//! Every random draw in the crate comes from a stream addressed by a master
//! seed and a path of stream indices, e.g. `[cell, hypothesis, replicate, role]`.
//! The key is mixed through splitmix64 into a ChaCha8 seed, so any replicate
//! can be regenerated in isolation and parallel schedules cannot change
//! results.
//!
//! Role codes used by the simulation engine: G=0, A=1, B=2, null-mix=3.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stream role for the gold pool draw.
pub const ROLE_G: u64 = 0;
/// Stream role for model A's rater draw.
pub const ROLE_A: u64 = 1;
/// Stream role for model B's rater draw and perturbation.
pub const ROLE_B: u64 = 2;
/// Stream role for mixing A and B under the null hypothesis.
pub const ROLE_NULL_MIX: u64 = 3;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path: Vec<u64>,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn with_path(master_seed: u64, path: &[u64]) -> Self {
        Self {
            master_seed,
            path: path.to_vec(),
        }
    }

    /// Extends the path by one index.
    pub fn child(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    /// Extends the path by several indices.
    pub fn descend(&self, indices: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    /// 256-bit key for this stream.
    pub fn key(&self) -> [u8; 32] {
        // Absorb the path length first so that [] and [0] differ.
        let mut state = splitmix64(self.master_seed ^ 0x5241_5445_5242_4f4f);
        state = splitmix64(state ^ self.path.len() as u64);
        for &p in &self.path {
            state = splitmix64(state.rotate_left(17) ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        let mut out = [0u8; 32];
        let mut s = state;
        for chunk in out.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key())
    }
}

/// One round of the splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit hash of a sequence of words.
pub fn hash_words(words: &[u64]) -> u64 {
    let mut h = splitmix64(words.len() as u64);
    for &w in words {
        h = splitmix64(h ^ w);
    }
    h
}
