//! Hierarchical seed derivation.
//!
//! Every random draw in a match comes from a stream addressed by a path such as
//! `(trial seed, player, round, purpose, candidate, sample)`. Streams are derived
//! by hashing the path, so adding a consumer or running units in parallel never
//! shifts the draws another consumer sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags used as path components.
pub mod purpose {
    pub const LABEL: u64 = 1;
    pub const ACTION: u64 = 2;
    pub const ROLLOUT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const PAYOFF_SAMPLE: u64 = 5;
    pub const BASE: u64 = 6;
    pub const TRIAL: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of integers into a single 64-bit seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(base, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A node in the stream hierarchy. Cheap to copy; children are derived on demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, path: &[u64]) -> Streams {
        Streams {
            seed: derive_seed(self.seed, path),
        }
    }

    pub fn rng(&self, path: &[u64]) -> StreamRng {
        StreamRng::seed_from_u64(derive_seed(self.seed, path))
    }
}

/// Draws an index from a categorical distribution given by `probs`.
///
/// Always consumes exactly one uniform draw, including for point masses.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Tie-break key for a named option at a given round: FNV-1a over
/// `label`, `0x00`, round (LE), salt (LE). Lowest key wins.
pub fn tie_break_key(label: &str, round: u32, salt: u64) -> u64 {
    let mut buf = Vec::with_capacity(label.len() + 13);
    buf.extend_from_slice(label.as_bytes());
    buf.push(0);
    buf.extend_from_slice(&round.to_le_bytes());
    buf.extend_from_slice(&salt.to_le_bytes());
    fnv1a(&buf)
}
