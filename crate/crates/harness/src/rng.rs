//! Random streams.
//!
//! Every stream is ChaCha20 (`rand_chacha::ChaCha20Rng`) keyed by
//! `seed_from_u64(seed)`. Replicate `k` uses stream `2k` for the adversary
//! and `2k + 1` for the learner, so runs replay identically on any platform
//! and the two parties never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Adversary,
    Learner,
}

pub fn stream(seed: u64, replicate: u64, role: Role) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let offset = match role {
        Role::Adversary => 0,
        Role::Learner => 1,
    };
    rng.set_stream(2 * replicate + offset);
    rng
}
