//! Seed derivation. Every random draw in the crate comes from a ChaCha8 stream
//! keyed by `(master seed, purpose, index)`, so a trial can be regenerated in
//! isolation and trials can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    Pilot = 2,
    Noise = 3,
    Rip = 4,
    Cluster = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a purpose tag and an index into a new seed.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(master, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let a = derive_seed(7, Stream::Channel, 3);
        assert_eq!(a, derive_seed(7, Stream::Channel, 3));
        assert_ne!(a, derive_seed(7, Stream::Noise, 3));
        assert_ne!(a, derive_seed(7, Stream::Channel, 4));
        assert_ne!(a, derive_seed(8, Stream::Channel, 3));

        let x: u64 = stream_rng(1, Stream::Pilot, 0).random();
        let y: u64 = stream_rng(1, Stream::Pilot, 0).random();
        assert_eq!(x, y);
    }
}
