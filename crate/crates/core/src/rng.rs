//! Counter-style reproducible random streams.
//!
//! Compatibility promise: the mapping from `(master_seed, experiment_id, replicate)`
//! to the output sequence is fixed. Changing `derive_stream` changes every
//! published artifact checksum.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub experiment_hash: u64,
    pub replicate: u64,
}

/// One independent random sequence. Never shared between replicates.
#[derive(Debug, Clone)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: StreamId,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, 64 bit.
pub fn hash_experiment_id(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive the stream for one replicate.
pub fn derive_stream(master_seed: u64, experiment_id: &str, replicate_index: u64) -> RngStream {
    stream_from_hash(master_seed, hash_experiment_id(experiment_id), replicate_index)
}

pub fn stream_from_hash(master_seed: u64, experiment_hash: u64, replicate: u64) -> RngStream {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ experiment_hash);
    let mut key = [0u8; 32];
    let words = [a, b, splitmix64(b ^ 0x5851_F42D_4C95_7F2D), splitmix64(a.rotate_left(17) ^ b)];
    for (i, w) in words.iter().enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    RngStream {
        master_seed,
        stream_id: StreamId { experiment_hash, replicate },
        rng,
    }
}

/// All replicate streams of one experiment id. Cheap to clone a member from.
#[derive(Debug, Clone)]
pub struct StreamFamily {
    base: RngStream,
}

impl StreamFamily {
    pub fn new(master_seed: u64, experiment_id: &str) -> Self {
        Self { base: derive_stream(master_seed, experiment_id, 0) }
    }

    /// Identical to `derive_stream(master_seed, experiment_id, replicate)`.
    #[inline]
    pub fn replicate(&self, replicate: u64) -> RngStream {
        let mut s = self.base.clone();
        s.rng.set_stream(replicate);
        s.rng.set_word_pos(0);
        s.stream_id.replicate = replicate;
        s
    }
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
