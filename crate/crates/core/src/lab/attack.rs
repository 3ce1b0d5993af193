//! The ordered chosen-ciphertext game against the cipher.
//!
//! The adversary learns one pair `(m, E(m))`, picks challenge plaintexts
//! `m0 < m1` on the same side of `m`, and receives `E(m_b)`. Because
//! ciphertexts grow roughly linearly in the plaintext, it picks a real
//! `n` with `m0/m < n < m1/m` and answers 1 iff `n * E(m) < E(m_b)`.

use num_bigint::BigUint;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

use crate::opea::{self, DomainKey, OpeaError};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("challenge plaintexts must differ (got {0} twice)")]
    EqualChallenge(u64),
    #[error("challenge {m0}, {m1} is not on one side of the revealed plaintext {m}")]
    MixedSides { m: u64, m0: u64, m1: u64 },
    #[error("need at least 3 plaintexts for a challenge")]
    DomainTooSmall,
    #[error(transparent)]
    Opea(#[from] OpeaError),
}

/// The adversary's guess given the revealed pair and the challenge
/// ciphertext, with `n = (m0 + m1) / (2m)`.
pub fn guess(m: u64, cm: &BigUint, m0: u64, m1: u64, challenge: &BigUint) -> Result<u8, AttackError> {
    if m0 == m1 {
        return Err(AttackError::EqualChallenge(m0));
    }
    if (m0 < m) != (m1 < m) || m0 == m || m1 == m {
        return Err(AttackError::MixedSides { m, m0, m1 });
    }
    let (lo, hi) = if m0 < m1 { (m0, m1) } else { (m1, m0) };
    // n * E(m) < E(m_b)  <=>  (lo + hi) * E(m) < 2m * E(m_b)
    let above = BigUint::from(lo + hi) * cm < BigUint::from(2 * m) * challenge;
    Ok(u8::from(above == (m1 > m0)))
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackReport {
    pub trials: u64,
    pub wins: u64,
    pub success_rate: f64,
    /// One-sided binomial p-value of `wins` against fair guessing.
    pub p_value: f64,
}

impl AttackReport {
    pub fn summary(&self) -> String {
        format!("trials={} wins={} success={:.4} p={:.3e}", self.trials, self.wins, self.success_rate, self.p_value)
    }
}

/// Plays `trials` independent games against `key`.
pub fn run_game(key: &DomainKey, trials: u64, seed: u64) -> Result<AttackReport, AttackError> {
    let t = key.t();
    if t < 3 {
        return Err(AttackError::DomainTooSmall);
    }
    let mut g = rng::seeded(seed);
    let mut wins = 0;
    for _ in 0..trials {
        // Revealed plaintext with room for two challenges on one side.
        let m = g.random_range(1..=t);
        let (a, b) = loop {
            let (a, b) = if m >= 3 && (m + 2 > t || g.random_bool(0.5)) {
                (g.random_range(1..m), g.random_range(1..m))
            } else {
                (g.random_range(m + 1..=t), g.random_range(m + 1..=t))
            };
            if a != b {
                break (a.min(b), a.max(b));
            }
        };
        let (m0, m1) = if g.random_bool(0.5) { (a, b) } else { (b, a) };
        let cm = opea::encrypt(key, m, &mut g)?;
        let bit = u8::from(g.random_bool(0.5));
        let challenge = opea::encrypt(key, if bit == 0 { m0 } else { m1 }, &mut g)?;
        if guess(m, &cm, m0, m1, &challenge)? == bit {
            wins += 1;
        }
    }
    let p_value = if wins == 0 {
        1.0
    } else {
        Binomial::new(0.5, trials).expect("valid binomial").sf(wins - 1)
    };
    Ok(AttackReport { trials, wins, success_rate: wins as f64 / trials.max(1) as f64, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1() -> DomainKey {
        DomainKey::from_parts(vec![1; 50], BigUint::from(100u32), 10).unwrap()
    }

    #[test]
    fn equal_challenge_is_rejected() {
        let c = BigUint::from(300u32);
        assert_eq!(guess(3, &c, 5, 5, &c), Err(AttackError::EqualChallenge(5)));
        assert!(matches!(guess(3, &c, 1, 5, &c), Err(AttackError::MixedSides { .. })));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = run_game(&k1(), 1000, 9).unwrap();
        let b = run_game(&k1(), 1000, 9).unwrap();
        assert_eq!(a.wins, b.wins);
        assert!(a.success_rate > 0.5);
    }
}
