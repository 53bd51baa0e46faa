//! Counter-based random streams.
//!
//! Every replicate draws from a ChaCha8 stream keyed by the master seed and a
//! purpose tag, with the replicate index as the stream counter. Results are
//! therefore independent of which worker runs a replicate and in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags keep sub-experiments that share a master seed on disjoint keys.
pub mod tag {
    pub const ENGINE: u64 = 0x656e_6769_6e65;
    pub const MASS_CHAIN: u64 = 0x6d61_7373;
    pub const ABSORBED: u64 = 0x6162_736f_7262;
    pub const LADDER: u64 = 0x6c61_6464_6572;
    pub const CSBP: u64 = 0x6373_6270;
    pub const CLUSTER: u64 = 0x636c_7573_7465;
    pub const PROFILE: u64 = 0x7072_6f66;
    pub const CALIBRATION: u64 = 0x0063_616c_6962;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seed for sub-run `sub` of a run keyed by `seed`, used when one replicate
/// chains several engine runs.
pub fn derive_seed(seed: u64, sub: u64) -> u64 {
    let mut state = seed ^ sub.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut state)
}

/// Stream `index` of the family keyed by `(seed, tag)`.
pub fn stream(seed: u64, tag: u64, index: u64) -> SimRng {
    let mut state = seed ^ tag.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
