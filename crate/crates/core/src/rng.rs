//! Named, indexed random sub-streams derived from one master seed.
//!
//! Each (name, index) pair gets its own ChaCha stream, so results do not
//! depend on the order or thread in which indices are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stream `index` of the sub-stream family `name` under `seed`.
pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name));
    rng.set_stream(index);
    rng
}
