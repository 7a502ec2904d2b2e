//! Named random streams derived from a single master seed.
//!
//! Every consumer of randomness (workload draws, per-device capability chains,
//! exploration, replay sampling, weight init) asks for its own stream by name and
//! index, so changing how often one consumer draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derives the 64-bit seed of the stream `(name, index)`.
    pub fn seed(&self, name: &str, index: u64) -> u64 {
        let mut h = splitmix64(self.master ^ fnv1a(name));
        h = splitmix64(h ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        h
    }

    pub fn stream(&self, name: &str, index: u64) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.seed(name, index))
    }

    /// A subtree whose streams are disjoint from this tree's.
    pub fn child(&self, name: &str, index: u64) -> SeedTree {
        SeedTree::new(self.seed(name, index))
    }
}

fn fnv1a(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Serializable position of a [`StreamRng`], sufficient to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCursor {
    pub seed: [u8; 32],
    pub stream: u64,
    /// 128-bit word position, kept as a decimal string.
    pub word_pos: String,
}

impl RngCursor {
    pub fn capture(rng: &StreamRng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<StreamRng, std::num::ParseIntError> {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse::<u128>()?);
        Ok(rng)
    }
}
