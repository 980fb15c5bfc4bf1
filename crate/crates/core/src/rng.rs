//! Per-chain random streams.
//!
//! Every chain draws from its own ChaCha8 stream keyed by the master seed and
//! selected by the chain index, so a chain's draws do not depend on which
//! thread runs it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw strictly inside (0, 1) with 53 random bits.
#[inline]
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Derive an independent seed for a sub-task, e.g. replication `r` of an
/// experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = stream_rng(seed, tag ^ 0x9e37_79b9_7f4a_7c15);
    rng.next_u64()
}
