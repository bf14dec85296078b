//! Seed derivation. Every random stream in a game comes from a keyed hash of
//! the master seed, a role label and a run index, so algorithm and adversary
//! randomness never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Algorithm,
    Adversary,
    Auxiliary,
}

impl Role {
    fn label(self) -> &'static [u8] {
        match self {
            Role::Algorithm => b"algorithm",
            Role::Adversary => b"adversary",
            Role::Auxiliary => b"auxiliary",
        }
    }
}

pub fn derive_seed(master: u64, role: Role, run: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(role.label());
    h.update(run.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng_for(master: u64, role: Role, run: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, role, run))
}

/// Child seed for component `index` inside a composite algorithm.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update(b"child");
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}
