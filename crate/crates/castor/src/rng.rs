//! Seed derivation for reproducible, order-independent sampling.
//!
//! Every randomized step in the pipeline draws from its own substream,
//! keyed by a master seed and a tuple of stream coordinates (purpose tag,
//! representation, group, shapelet slot, ...). Substreams make results
//! independent of iteration order, so fitting can be parallelized across
//! groups without changing any sampled value.
//!
//! The mixing function is SplitMix64: the master seed is finalized once,
//! then each coordinate word is finalized and XOR-folded into the state,
//! which is finalized again. The resulting 64-bit value seeds a
//! `ChaCha8Rng` for the substream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Purpose tags. Distinct tags keep unrelated substreams apart even when
// their coordinate tuples collide.
pub(crate) const STREAM_SHAPELET: u64 = 0x01;
pub(crate) const STREAM_NORM_FLAG: u64 = 0x02;
pub(crate) const STREAM_FOLDS: u64 = 0x03;
pub(crate) const STREAM_FIT: u64 = 0x04;
pub(crate) const STREAM_SYNTH_CLASS: u64 = 0x05;
pub(crate) const STREAM_SYNTH_SAMPLE: u64 = 0x06;
pub(crate) const STREAM_SHUFFLE: u64 = 0x07;

/// SplitMix64 finalizer (Steele, Lea & Flood's mixing constants).
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed and stream coordinates into a substream seed.
///
/// The word count is folded into the initial state so tuples of different
/// arity stay apart even when one is a prefix of the other.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let len_tag = (words.len() as u64).wrapping_mul(0xA076_1D64_78BD_642F);
    let mut state = splitmix64(master ^ len_tag);
    for &w in words {
        state = splitmix64(state ^ splitmix64(w));
    }
    state
}

/// Deterministic substream generator for the given coordinates.
pub fn substream(master: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, words))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_deterministic() {
        assert_eq!(derive_seed(42, &[1, 2, 3]), derive_seed(42, &[1, 2, 3]));
        let mut a = substream(7, &[STREAM_SHAPELET, 0, 1, 2]);
        let mut b = substream(7, &[STREAM_SHAPELET, 0, 1, 2]);
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn coordinates_separate_streams() {
        let base = derive_seed(7, &[STREAM_SHAPELET, 0, 1, 2]);
        assert_ne!(base, derive_seed(7, &[STREAM_SHAPELET, 0, 1, 3]));
        assert_ne!(base, derive_seed(7, &[STREAM_NORM_FLAG, 0, 1, 2]));
        assert_ne!(base, derive_seed(8, &[STREAM_SHAPELET, 0, 1, 2]));
        // prefix tuples of different arity must not alias
        assert_ne!(
            derive_seed(0, &[STREAM_FOLDS]),
            derive_seed(0, &[STREAM_FOLDS, 0])
        );
    }

    // Frozen values pin the documented mixing function; if these change,
    // previously written models no longer reproduce.
    #[test]
    fn mixing_function_is_stable() {
        assert_eq!(derive_seed(0, &[]), 16294208416658607535);
        assert_eq!(derive_seed(0, &[0]), 6299705715953851186);
        assert_eq!(derive_seed(42, &[1, 2]), 17129926129532218685);
    }
}
