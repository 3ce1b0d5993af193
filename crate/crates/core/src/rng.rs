//! Seedable, splittable deterministic generator used by every randomized
//! operation.

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use sha2::{Digest, Sha256};

pub type CipherRng = rand_chacha::ChaCha20Rng;

pub fn seeded(seed: u64) -> CipherRng {
    CipherRng::seed_from_u64(seed)
}

/// Generator keyed by an arbitrary byte string.
pub fn from_bytes(seed: &[u8]) -> CipherRng {
    CipherRng::from_seed(Sha256::digest(seed).into())
}

/// Draws an independent child generator.
pub fn split(rng: &mut CipherRng) -> CipherRng {
    CipherRng::from_rng(rng)
}

/// Uniform integer in `[0, n)`; `n` must be positive.
pub fn below(rng: &mut impl RngCore, n: &BigUint) -> BigUint {
    assert!(*n > BigUint::ZERO, "empty range");
    if let Ok(small) = u64::try_from(n) {
        return BigUint::from(rng.random_range(0..small));
    }
    let bits = n.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64) * 8 - bits;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let v = BigUint::from_bytes_be(&buf);
        if v < *n {
            return v;
        }
    }
}
