//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha20 stream derived from the
//! run seed, a purpose tag and a `(client, phase)` key. Client work inside a
//! phase therefore produces the same values in any execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Ensemble = 1,
    Reward = 2,
    Privacy = 3,
    Arms = 4,
}

pub fn stream(seed: u64, purpose: Purpose, client: u32, phase: u32) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = purpose as u8;
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(((client as u64) << 32) | phase as u64);
    rng
}
