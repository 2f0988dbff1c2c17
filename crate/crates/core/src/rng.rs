//! Counter-based random streams.
//!
//! A stream is identified by `(master seed, module tag, index)`. The seed and
//! tag form the ChaCha key, the index selects one of the 2^64 ChaCha streams,
//! so any sample can be regenerated without touching the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Module tags. Distinct tags give independent key material.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Tag {
    Environment = 0x454e_5649,
    Walk = 0x5741_4c4b,
    Brownian = 0x4252_4f57,
    Config = 0x434f_4e46,
    Joint = 0x4a4f_494e,
}

pub fn stream(seed: u64, tag: Tag, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(tag as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. one environment realization per sample.
pub fn child_seed(seed: u64, tag: Tag, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, tag, index).next_u64()
}

/// Uniform in [0, 1) from the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}
