//! Deterministic random-stream derivation.
//!
//! All randomness in a run flows from one master seed. Each consumer gets
//! its own ChaCha stream addressed by a `(domain, a, b)` triple, so blocks
//! can be generated in any order (or skipped) without disturbing the draws
//! of any other block. The mix below is a SplitMix64-style finalizer applied
//! to the address words; it only has to decorrelate neighboring addresses,
//! not be cryptographically strong.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream address spaces. Keep the discriminants stable: they are part of
/// the reproducibility contract.
#[derive(Debug, Clone, Copy)]
pub enum Domain {
    /// Receiver noise of one block: a = epoch, b = segment * 2 + element.
    Noise = 1,
    /// Radiometer fluctuation of one band-power value: a = epoch, b = element.
    Band = 2,
    /// Event schedule of one source: a = source index, b = 0.
    Events = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the ChaCha stream for one `(domain, a, b)` address.
pub fn stream(master_seed: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    let mut state = splitmix(master_seed ^ (domain as u64).wrapping_mul(0xa076_1d64_78bd_642f));
    state = splitmix(state ^ a);
    state = splitmix(state ^ b.wrapping_mul(0xe703_7ed1_a0b4_28db));
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
