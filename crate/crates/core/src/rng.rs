//! Counter-keyed random streams.
//!
//! Every stochastic step (fold assignment, bootstrap replicate `(b, m)`,
//! simulation replication) draws from its own ChaCha stream selected by a
//! hash of a small counter tuple. Results therefore do not depend on the
//! order in which parallel workers pick up the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags, so different consumers of the same seed never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Folds = 1,
    Bootstrap = 2,
    Simulation = 3,
    Benchmark = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for `(seed, kind, counters...)`.
pub fn stream(seed: u64, kind: StreamKind, counters: &[u64]) -> ChaCha8Rng {
    let mut id = splitmix64(kind as u64);
    for &c in counters {
        id = splitmix64(id ^ splitmix64(c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A 64-bit seed for a downstream consumer, keyed like [`stream`].
pub fn derive_seed(seed: u64, kind: StreamKind, counters: &[u64]) -> u64 {
    use rand::RngCore;
    stream(seed, kind, counters).next_u64()
}
