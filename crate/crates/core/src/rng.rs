//! Seeded, splittable random streams.
//!
//! Every stochastic operation takes an [`RngSeed`] (or an already-built
//! [`SimRng`]). The generator is ChaCha8 keyed by `seed` with the ChaCha
//! stream id set to `stream`, so two jobs with the same seed and distinct
//! stream ids draw independent sequences regardless of which thread runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    /// Child seed for a sub-job. Mixing is a splitmix64 finalizer over the
    /// parent stream and `tag`, so derived streams are stable across runs.
    pub fn derive(self, tag: u64) -> Self {
        let mut z = self
            .stream
            .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(0x6A09_E667_F3BC_C909);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self {
            seed: self.seed,
            stream: z,
        }
    }

    pub fn rng(self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed)
    }
}
