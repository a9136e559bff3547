//! Deterministic random streams for replications.
//!
//! Every replication gets its own counter-addressed stream of one ChaCha8
//! generator seeded from the master seed. Streams are independent, so
//! replications can run in parallel, in any order, on any number of worker
//! threads, and still consume exactly the same randomness — results are
//! bit-identical across runs and thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one replication: master seed picks the keystream,
/// replication index picks the stream within it.
///
/// Within a replication the consumption order is fixed: first one uniform
/// per item for the arm draw (item-index order), then one uniform per
/// conflict for the tie-break coins (ascending contested position), or the
/// label shuffle for the spot-labeling baseline.
pub fn replication_rng(master_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication);
    rng
}
