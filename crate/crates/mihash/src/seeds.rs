//! Seed derivation. All randomness in the engine flows from one 64-bit
//! base seed through named sub-streams, so changing one consumer (say,
//! the reservoir) never perturbs another (say, weight init).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known sub-stream names used across the engine.
pub mod stream {
    pub const INIT: &str = "init";
    pub const RESERVOIR: &str = "reservoir";
    pub const SHUFFLE: &str = "shuffle";
    pub const CHECKPOINTS: &str = "checkpoints";
    pub const SYNTH: &str = "synth";
    pub const SPLIT: &str = "split";
    pub const CORRELATE: &str = "correlate";
}

/// Derives a deterministic sub-seed from a base seed and a stream name.
///
/// FNV-1a over the name, mixed with the base seed and finalized with
/// the splitmix64 avalanche so adjacent base seeds decorrelate.
pub fn sub_seed(base: u64, name: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x1000_0000_01b3;
    let mut h = FNV_OFFSET;
    for byte in name.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(base.wrapping_add(h))
}

/// Seeded generator for one named sub-stream.
pub fn sub_rng(base: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(base, name))
}

/// Per-trial seeds are the base seed plus the trial index.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
