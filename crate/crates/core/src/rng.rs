//! Reproducible random streams.
//!
//! Every replicate draws from ChaCha streams whose seeds are derived purely
//! from (master seed, experiment tag, replicate index, stream role). Workers
//! can therefore process replicates in any order or count without changing a
//! single output bit, and any replicate can be re-run in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for within one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    /// Environment gap increments d_k.
    EnvGaps,
    /// Environment offspring-law draws nu_k.
    EnvLaws,
    /// Population reproduction.
    Offspring,
    /// Reference-process paths (Brownian grid, bridge refinement).
    Path,
    /// Auxiliary draws (assumption checks, spec generation).
    Aux,
}

impl StreamRole {
    fn index(self) -> u64 {
        match self {
            StreamRole::EnvGaps => 1,
            StreamRole::EnvLaws => 2,
            StreamRole::Offspring => 3,
            StreamRole::Path => 4,
            StreamRole::Aux => 5,
        }
    }
}

/// Root of the stream tree for one experiment run.
#[derive(Debug, Clone, Copy)]
pub struct Seeder {
    master: u64,
}

/// The per-replicate stream bundle used by the simulators.
pub struct ReplicateStreams {
    pub env_gaps: ChaCha8Rng,
    pub env_laws: ChaCha8Rng,
    pub offspring: ChaCha8Rng,
}

impl Seeder {
    pub fn new(master: u64) -> Self {
        Seeder { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive the stream for (tag, replicate, role).
    pub fn stream(&self, tag: &str, replicate: u64, role: StreamRole) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(derive_seed(self.master, tag, replicate, role.index()))
    }

    pub fn replicate(&self, tag: &str, replicate: u64) -> ReplicateStreams {
        ReplicateStreams {
            env_gaps: self.stream(tag, replicate, StreamRole::EnvGaps),
            env_laws: self.stream(tag, replicate, StreamRole::EnvLaws),
            offspring: self.stream(tag, replicate, StreamRole::Offspring),
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn derive_seed(master: u64, tag: &str, replicate: u64, role: u64) -> [u8; 32] {
    let mut state = master;
    let _ = splitmix64(&mut state);
    state ^= fnv1a64(tag.as_bytes());
    let _ = splitmix64(&mut state);
    state ^= replicate.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let _ = splitmix64(&mut state);
    state ^= role.wrapping_mul(0xd1b5_4a32_d192_ed03);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}
