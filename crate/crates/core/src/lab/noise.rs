//! Where sums of ciphertexts decrypt to.
//!
//! Standard decryption of `E(a) + E(b)` returns `a + b - 1` unless both
//! draws sit at the top of their partitions, so `P[d = c]` is at most
//! `1 / (R_a + R_b)`; extended decryption mirrors this from above. With
//! `k` terms, `d` and `d'` bracket the true sum within 2.

use num_bigint::BigUint;
use rand::Rng;
use serde::Serialize;

use crate::opea::{self, DomainKey, OpeaError};
use crate::rng;

#[derive(Clone, Debug)]
pub struct NoiseConfig {
    /// Plaintexts are drawn from `1..=t`.
    pub t: u64,
    /// Constant partition length.
    pub r: u32,
    /// Terms per sum.
    pub terms: u64,
    pub trials: u64,
    pub seed: u64,
}

impl NoiseConfig {
    /// A key whose domain covers every sum of `terms` plaintexts.
    pub fn key(&self) -> Result<DomainKey, OpeaError> {
        let t_max = (self.t + 1) * self.terms;
        let r = u64::from(self.r.max(1));
        let sigma = (t_max + self.terms) * r + 3 * r + 1;
        DomainKey::from_parts(vec![self.r; t_max as usize], BigUint::from(sigma), self.t)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseReport {
    pub terms: u64,
    pub r: u32,
    pub trials: u64,
    /// Standard decryption landed on `sum - (terms - 1) .. sum`; counts per
    /// offset `sum - d`.
    pub below: Vec<u64>,
    /// Extended decryption, counts per offset `d' - sum`.
    pub above: Vec<u64>,
    /// Largest `d' - d` observed.
    pub max_gap: u64,
}

impl NoiseReport {
    fn share(counts: &[u64], offset: usize, trials: u64) -> f64 {
        counts.get(offset).copied().unwrap_or(0) as f64 / trials as f64
    }

    /// Empirical `P[d = sum - 1]`.
    pub fn p_d_minus_one(&self) -> f64 {
        Self::share(&self.below, 1, self.trials)
    }

    /// Empirical `P[d = sum]`.
    pub fn p_d_exact(&self) -> f64 {
        Self::share(&self.below, 0, self.trials)
    }

    /// Empirical `P[d' = sum + 1]`.
    pub fn p_ext_plus_one(&self) -> f64 {
        Self::share(&self.above, 1, self.trials)
    }

    /// `1 - 1/(R_a + R_b)` for two equal partitions.
    pub fn pair_bound(&self) -> f64 {
        1.0 - 1.0 / (2.0 * f64::from(self.r))
    }

    pub fn stderr(p: f64, trials: u64) -> f64 {
        (p * (1.0 - p) / trials as f64).sqrt()
    }

    pub fn summary(&self) -> String {
        format!(
            "terms={} R={} trials={} P[d=sum-1]={:.4} P[d=sum]={:.4} P[d'=sum+1]={:.4} max(d'-d)={}",
            self.terms,
            self.r,
            self.trials,
            self.p_d_minus_one(),
            self.p_d_exact(),
            self.p_ext_plus_one(),
            self.max_gap
        )
    }
}

pub fn probe(cfg: &NoiseConfig) -> Result<NoiseReport, OpeaError> {
    let key = cfg.key()?;
    let mut g = rng::seeded(cfg.seed);
    let slots = cfg.terms as usize + 1;
    let mut below = vec![0u64; slots];
    let mut above = vec![0u64; slots];
    let mut max_gap = 0;
    for _ in 0..cfg.trials {
        let mut sum = 0u64;
        let mut c = BigUint::ZERO;
        let mut e = BigUint::ZERO;
        for _ in 0..cfg.terms {
            let m = g.random_range(1..=cfg.t);
            sum += m;
            c += opea::encrypt(&key, m, &mut g)?;
            e += opea::encrypt_ext(&key, m, &mut g)?;
        }
        let d = opea::decrypt(&key, &c)?;
        let d_ext = opea::decrypt_ext(&key, &e)?;
        below[(sum - d) as usize] += 1;
        above[(d_ext - sum) as usize] += 1;
        max_gap = max_gap.max(d_ext - d);
    }
    Ok(NoiseReport { terms: cfg.terms, r: cfg.r, trials: cfg.trials, below, above, max_gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_decrypts_exactly() {
        let rep = probe(&NoiseConfig { t: 30, r: 8, terms: 1, trials: 500, seed: 2 }).unwrap();
        assert_eq!(rep.below[0], 500);
        assert_eq!(rep.above[0], 500);
        assert_eq!(rep.max_gap, 0);
    }

    #[test]
    fn unit_partitions_stay_under_half() {
        let rep = probe(&NoiseConfig { t: 30, r: 1, terms: 2, trials: 4000, seed: 3 }).unwrap();
        assert!(rep.p_d_exact() <= 0.5, "{}", rep.summary());
    }
}
