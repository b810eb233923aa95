//! Derivation of independent RNG streams from one master seed.
//!
//! `stream_seed(master, stream, index)` mixes the three inputs with
//! SplitMix64 finalisers. Each subsystem draws from its own stream so a change
//! in one (say, an extra dropout draw) never shifts the maps or the replay
//! sampling of another run with the same master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams. The discriminant is part of the derivation and must
/// stay stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Per-episode scenario draws (map size, rover count).
    Scenario = 1,
    Map = 2,
    KMeans = 3,
    Policy = 4,
    Dropout = 5,
    Replay = 6,
    ModelInit = 7,
    Exploration = 8,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream as u64)) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, stream, index))
}
