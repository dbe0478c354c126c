//! Deterministic substream derivation.
//!
//! Reproducibility contract: a path's noise is a pure function of
//! (master_seed, lane), where the lane is a short list of indices naming
//! the logical stream -- outer path number, nested-estimator slot, inner
//! path number and so on. Work can then be sharded across threads in any
//! order and still produce bit-identical results, because no generator
//! state is ever shared between lanes.
//!
//! The derivation runs the key material through SplitMix64 steps and uses
//! the result as a ChaCha8 seed. ChaCha8 is a keyed counter-mode stream,
//! so distinct lanes give statistically independent streams; SplitMix64
//! just spreads the (tiny) key entropy over the 256-bit seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 scramble round.
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive the generator for one logical lane. Typical lanes:
///
/// - `&[path]` for a plain Monte Carlo path,
/// - `&[outer, slot, inner]` for inner paths of a nested estimator,
///
/// with a `slot` constant distinguishing the independent sub-estimates
/// spawned from the same outer path.
pub fn substream(master_seed: u64, lane: &[u64]) -> ChaCha8Rng {
    let mut state = master_seed ^ 0x5b4c_6f77_9a42_b131;
    let mut seed = [0u8; 32];
    // fold the lane into the state, then squeeze out 4 words
    for &id in lane {
        let mut scrambled = id ^ 0x9e6c_63d0_876a_3f6b;
        state ^= splitmix(&mut scrambled);
        splitmix(&mut state);
        state = state.wrapping_add(id);
    }
    for word in 0..4 {
        let w = splitmix(&mut state);
        seed[word * 8..word * 8 + 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Derive a fresh master seed from a lane, for composite estimators whose
/// pieces (quadrature nodes, lattice sites) must each own an independent
/// family of path streams.
pub fn derive_seed(master_seed: u64, lane: &[u64]) -> u64 {
    let mut state = master_seed ^ 0x1f8b_08d4_33c1_97e2;
    for &id in lane {
        let mut scrambled = id ^ 0x9e6c_63d0_876a_3f6b;
        state ^= splitmix(&mut scrambled);
        splitmix(&mut state);
        state = state.wrapping_add(id);
    }
    splitmix(&mut state)
}
