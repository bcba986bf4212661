//! Keyed, counter-style random streams.
//!
//! Every random decision in a trial draws from a substream addressed by
//! `(seed, iteration, stage, entity)`. Substreams are independent of the
//! order in which work is scheduled, so parallel execution and resumption
//! from disk reproduce the exact same draws without replaying earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The RNG type handed out by [`substream`].
pub type StreamRng = ChaCha8Rng;

/// Stable 256-bit digest of a sequence of byte strings.
///
/// Parts are length-prefixed so `["ab", "c"]` and `["a", "bc"]` differ.
pub fn digest_parts<I, P>(parts: I) -> [u8; 32]
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut hasher = Sha256::new();
    for part in parts {
        let bytes = part.as_ref();
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    hasher.finalize().into()
}

/// Stable 64-bit hash of a sequence of byte strings.
pub fn stable_hash<I, P>(parts: I) -> u64
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let d = digest_parts(parts);
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Independent RNG for one `(seed, iteration, stage, entity)` address.
pub fn substream(seed: u64, iteration: u32, stage: &str, entity: &str) -> StreamRng {
    let key = digest_parts([
        &seed.to_le_bytes()[..],
        &iteration.to_le_bytes()[..],
        stage.as_bytes(),
        entity.as_bytes(),
    ]);
    ChaCha8Rng::from_seed(key)
}

/// A 64-bit seed for a backend call, addressed like [`substream`].
pub fn derive_seed(seed: u64, iteration: u32, stage: &str, entity: &str) -> u64 {
    stable_hash([
        &seed.to_le_bytes()[..],
        &iteration.to_le_bytes()[..],
        stage.as_bytes(),
        entity.as_bytes(),
    ])
}
