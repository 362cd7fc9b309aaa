//! Seed derivation.
//!
//! Every random stream in the pipeline comes from a ChaCha8 generator whose
//! seed is derived from the experiment seed plus a list of tags (stage, fold,
//! graph index, ...). Streams are therefore independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stages so that streams for different purposes never collide.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Synthetic = 1,
    Louvain = 2,
    Folds = 3,
    Landmarks = 4,
    Split = 5,
    ModelInit = 6,
    Training = 7,
    ApproxSample = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive(base: u64, stream: Stream, tags: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(stream as u64));
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn rng(base: u64, stream: Stream, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, stream, tags))
}
