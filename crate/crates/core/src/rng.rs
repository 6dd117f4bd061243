//! Seed derivation. Every random stream in the crate is a ChaCha20 generator
//! keyed by the run seed, with the ChaCha stream id set to
//! `(component << 32) | member`. Components never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Component {
    Noise = 1,
    Metropolis = 2,
    Points = 3,
    InitialState = 4,
}

pub fn stream(seed: u64, component: Component, member: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((component as u64) << 32) | member as u64);
    rng
}

/// A 64-bit seed for ensemble member `member`, drawn from the run seed.
pub fn member_seed(seed: u64, member: u32) -> u64 {
    use rand::RngCore;
    stream(seed, Component::Noise, member).next_u64()
}
