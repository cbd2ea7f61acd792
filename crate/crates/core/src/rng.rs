//! Seed discipline.
//!
//! Every experiment takes one root seed. Independent random streams are
//! derived from it by mixing in a purpose label or a chunk counter, so that
//! adding worker threads or reordering unrelated work never changes what any
//! single consumer draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream seed from a root seed and a purpose label.
pub fn derive_labeled(root: u64, label: &str) -> u64 {
    // FNV-1a over the label, then splitmix to spread the bits.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    mix(root ^ mix(h))
}

/// Derive a stream seed from a root seed and a chunk/sample counter.
pub fn derive_indexed(root: u64, index: u64) -> u64 {
    mix(root ^ mix(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Deterministic generator for a derived stream.
pub fn stream(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_labeled(root, label))
}

/// Deterministic generator for the `index`-th chunk of a stream.
pub fn chunk_stream(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(derive_labeled(root, label), index))
}
