//! Named random substreams derived from one root seed.
//!
//! Every consumer (data shuffle, initialization, batch sampling, ...) draws
//! from its own ChaCha stream so that changing how many numbers one
//! component consumes never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a, used only to turn a stream name into a stream id.
fn stream_id(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

pub fn substream(root_seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream_id(name));
    rng
}
