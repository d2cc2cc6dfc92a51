//! Named random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator whose seed is derived from a
//! parent seed, a [`Stream`] tag and an index. A stream is therefore reproducible on its own:
//! replicate 17's bootstrap draws do not depend on how many draws replicate 16 consumed, nor
//! on which worker ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tag of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Design = 1,
    TestSet = 2,
    Noise = 3,
    Bootstrap = 4,
    Folds = 5,
    Subsample = 6,
    Weights = 7,
    Replicate = 8,
    SubsetSearch = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(parent, stream, index)`.
pub fn derive_seed(parent: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(parent ^ 0x5851_f42d_4c95_7f2d);
    let b = splitmix64(a ^ (stream as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
    splitmix64(b ^ index)
}

pub fn stream_rng(parent: u64, stream: Stream, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, stream, index))
}
