//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, domain, stream, counter)`: the ChaCha key
//! is derived from the seed and domain, the stream index selects the nonce and
//! the counter is the word position. Two callers asking for the same address
//! always see the same value, regardless of thread count or call order.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream domains keep unrelated consumers of the same seed independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Traversal = 0x7472_6176,
    Latent = 0x6c61_7465,
    Cluster = 0x636c_7573,
    Init = 0x696e_6974,
    Shuffle = 0x7368_7566,
    Generator = 0x6765_6e65,
    Repeat = 0x7265_7065,
}

/// SplitMix64 finalizer applied to a pair; used for per-record seed derivation.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha stream positioned at counter zero.
pub fn stream(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, domain as u64));
    rng.set_stream(stream);
    rng
}

/// Uniform draw in [0, 1) at an explicit counter position.
pub fn uniform_at(seed: u64, domain: Domain, stream_id: u64, counter: u64) -> f64 {
    let mut rng = stream(seed, domain, stream_id);
    rng.set_word_pos(u128::from(counter) * 2);
    to_unit(rng.next_u64())
}

/// Maps 53 high bits onto [0, 1).
pub fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential counter reader over one stream; the i-th call returns the value
/// at counter i.
pub struct CounterStream {
    rng: ChaCha8Rng,
}

impl CounterStream {
    pub fn new(seed: u64, domain: Domain, stream_id: u64) -> Self {
        Self { rng: stream(seed, domain, stream_id) }
    }

    pub fn next_uniform(&mut self) -> f64 {
        to_unit(self.rng.next_u64())
    }

    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
