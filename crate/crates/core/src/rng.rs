//! Seeded random streams.
//!
//! Every replica owns several independent ChaCha streams, one per purpose,
//! all derived from `(master seed, replica, purpose)`. Environment draws,
//! exploration draws and reward noise therefore never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stream in the crate.
pub type StreamRng = ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Building the environment (preference vectors, arm pool, partition).
    Setup = 1,
    /// Which user arrives each round.
    Arrival = 2,
    /// Arm contexts and smoothing perturbations.
    Context = 3,
    /// Reward noise.
    Noise = 4,
    /// Uniform exploration inside policies.
    Exploration = 5,
    /// Verification suites.
    Verify = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, replica, purpose)`.
pub fn stream(seed: u64, replica: u64, purpose: Purpose) -> StreamRng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for (n, chunk) in key.chunks_mut(8).enumerate() {
        state = splitmix64(state ^ replica.rotate_left(17 * n as u32 + 1));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(purpose as u64);
    rng
}
