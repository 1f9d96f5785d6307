//! Deterministic RNG substreams derived from one master seed.
//!
//! Every (component, round) pair gets its own generator, so a change in how
//! one stage draws randomness (or how often priorities are recomputed) never
//! perturbs the draws of another stage or round.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Simulation stages that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Links,
    Priorities,
    Routing,
    Swapping,
    Sifting,
}

impl Component {
    fn tag(self) -> u64 {
        match self {
            Component::Links => 1,
            Component::Priorities => 2,
            Component::Routing => 3,
            Component::Swapping => 4,
            Component::Sifting => 5,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one component in one round.
pub fn substream(master_seed: u64, component: Component, round: u64) -> ChaCha12Rng {
    let mut state = master_seed
        ^ component.tag().wrapping_mul(0xA076_1D64_78BD_642F)
        ^ round.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
