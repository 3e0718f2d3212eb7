use serde::{Deserialize, Serialize};

/// Independent seeds expanded from one master seed.
///
/// The expansion is four successive SplitMix64 outputs of the master seed,
/// in the order split, init, shuffle, augment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
    pub augment: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSet {
    pub fn from_master(master: u64) -> Self {
        let mut s = master;
        SeedSet {
            split: splitmix64(&mut s),
            init: splitmix64(&mut s),
            shuffle: splitmix64(&mut s),
            augment: splitmix64(&mut s),
        }
    }
}
