//! Order-preserving encryption with additivity.
//!
//! Plaintext `t` maps to a uniform draw from the partition `[L[t], U[t]]`
//! (standard) or `[L'[t], U'[t]]` (extended). The boundaries are spaced so
//! that sums of standard ciphertexts stay below `L[sum]` and sums of
//! extended ciphertexts stay above `U'[sum]`.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::rng;

/// Upper bound on `T_max` accepted by key derivation (memory for `R`).
pub const MAX_T_MAX: u64 = 1 << 25;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpeaError {
    #[error("key sizing: {0}")]
    KeySizing(String),
    #[error("plaintext or partition index {value} outside 1..={max}")]
    DomainRange { value: i128, max: u64 },
    #[error("NULL cell")]
    NullCell,
    #[error("value {0} is not a ciphertext of this domain")]
    NotACiphertext(BigUint),
    #[error("value {0} lies above the last extended partition")]
    AboveDomain(BigUint),
    #[error("precondition: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, OpeaError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Standard,
    Extended,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionBounds {
    pub lower: BigUint,
    pub upper: BigUint,
    pub variant: Variant,
}

/// Secret key of one comparison domain. Immutable once built.
#[derive(Clone, PartialEq, Eq)]
pub struct DomainKey {
    seed: Vec<u8>,
    r: Vec<u32>,
    prefix: Vec<u64>,
    sigma: BigUint,
    t: u64,
    max_group: u64,
    r_bits: u32,
}

impl std::fmt::Debug for DomainKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainKey")
            .field("t", &self.t)
            .field("t_max", &self.t_max())
            .field("max_group", &self.max_group)
            .finish_non_exhaustive()
    }
}

fn sizing(msg: impl Into<String>) -> OpeaError {
    OpeaError::KeySizing(msg.into())
}

/// Derives a key: `T_max = max_sum` sorted random `r_bits`-bit values and the
/// smallest `sigma` meeting both the extended-variant and the sum-comparison
/// preconditions.
pub fn derive_domain_key(seed: &[u8], t: u64, max_group: u64, max_sum: u64, r_bits: u32) -> Result<DomainKey> {
    if t < 1 {
        return Err(sizing("T must be at least 1"));
    }
    if max_group < 1 {
        return Err(sizing("max_group must be at least 1"));
    }
    if max_sum < t {
        return Err(sizing(format!("max_sum {max_sum} must be at least T = {t}")));
    }
    if !(1..=16).contains(&r_bits) {
        return Err(sizing(format!("r_bits {r_bits} outside 1..=16")));
    }
    if max_sum > MAX_T_MAX {
        return Err(sizing(format!("max_sum {max_sum} exceeds the supported limit {MAX_T_MAX}")));
    }
    let mut g = rng::from_bytes(seed);
    let top = (1u32 << r_bits) - 1;
    let mut r: Vec<u32> = (0..max_sum).map(|_| g.random_range(1..=top)).collect();
    r.sort_unstable();
    let r_max = u64::from(*r.last().expect("T_max >= 1"));
    let r_1 = u64::from(r[0]);
    let ext_min = BigUint::from(3 * r_max + 1);
    let sum_min = BigUint::from(max_sum + max_group) * r_max - r_1;
    let sigma = ext_min.max(sum_min);
    Ok(DomainKey::assemble(seed.to_vec(), r, sigma, t, max_group, r_bits))
}

impl DomainKey {
    fn assemble(seed: Vec<u8>, r: Vec<u32>, sigma: BigUint, t: u64, max_group: u64, r_bits: u32) -> Self {
        let mut prefix = Vec::with_capacity(r.len() + 1);
        prefix.push(0u64);
        let mut acc = 0u64;
        for &v in &r {
            acc += u64::from(v);
            prefix.push(acc);
        }
        DomainKey { seed, r, prefix, sigma, t, max_group, r_bits }
    }

    /// Builds a key from explicit parts (fixtures, tests). `r` must be
    /// non-decreasing and `sigma > 3 * R_{T_max}`.
    pub fn from_parts(r: Vec<u32>, sigma: BigUint, t: u64) -> Result<Self> {
        if r.is_empty() {
            return Err(sizing("R must not be empty"));
        }
        if r.windows(2).any(|w| w[0] > w[1]) {
            return Err(sizing("R must be non-decreasing"));
        }
        if t < 1 || t > r.len() as u64 {
            return Err(sizing(format!("T = {t} must lie in 1..={}", r.len())));
        }
        let r_max = *r.last().expect("non-empty");
        if sigma <= BigUint::from(3 * u64::from(r_max)) {
            return Err(sizing("sigma must exceed 3 * R_{T_max}"));
        }
        Ok(Self::assemble(Vec::new(), r, sigma, t, 1, 0))
    }

    pub fn seed(&self) -> &[u8] {
        &self.seed
    }
    pub fn sigma(&self) -> &BigUint {
        &self.sigma
    }
    pub fn t(&self) -> u64 {
        self.t
    }
    pub fn t_max(&self) -> u64 {
        self.r.len() as u64
    }
    pub fn max_group(&self) -> u64 {
        self.max_group
    }
    pub fn r_bits(&self) -> u32 {
        self.r_bits
    }
    /// `R_t`, 1-based.
    pub fn r(&self, t: u64) -> u32 {
        self.r[(t - 1) as usize]
    }
    pub fn r_max(&self) -> u32 {
        *self.r.last().expect("non-empty")
    }

    fn check_index(&self, t: u64) -> Result<()> {
        if t < 1 || t > self.t_max() {
            return Err(OpeaError::DomainRange { value: i128::from(t), max: self.t_max() });
        }
        Ok(())
    }

    /// `L[t] = t*sigma + (t-1)*R_1 + prefix[t-1]`, no range check.
    fn lower(&self, t: u64) -> BigUint {
        let tail = (t - 1) as u128 * u128::from(self.r[0]) + u128::from(self.prefix[(t - 1) as usize]);
        &self.sigma * t + BigUint::from(tail)
    }

    /// `U'[t] = t*sigma - (t-1)*R_1 - prefix[t-1]`, no range check.
    fn ext_upper(&self, t: u64) -> BigUint {
        let tail = (t - 1) as u128 * u128::from(self.r[0]) + u128::from(self.prefix[(t - 1) as usize]);
        &self.sigma * t - BigUint::from(tail)
    }
}

pub fn boundary_pair(key: &DomainKey, t: u64) -> Result<PartitionBounds> {
    key.check_index(t)?;
    let lower = key.lower(t);
    let upper = &lower + key.r(t);
    Ok(PartitionBounds { lower, upper, variant: Variant::Standard })
}

pub fn ext_boundary_pair(key: &DomainKey, t: u64) -> Result<PartitionBounds> {
    key.check_index(t)?;
    let upper = key.ext_upper(t);
    let lower = &upper - key.r(t);
    Ok(PartitionBounds { lower, upper, variant: Variant::Extended })
}

/// Quadratic-time boundary generation by the iterative recurrences. Accepts
/// any non-negative `R`; used to check the closed forms.
pub fn boundaries_iterative_raw(r: &[u64], sigma: &BigUint, variant: Variant, upto: usize) -> Result<Vec<PartitionBounds>> {
    if upto > r.len() {
        return Err(OpeaError::Precondition(format!("upto {upto} exceeds |R| = {}", r.len())));
    }
    if r.is_empty() || upto == 0 {
        return Ok(Vec::new());
    }
    let r_max = *r.iter().max().expect("non-empty");
    let mut out: Vec<PartitionBounds> = Vec::with_capacity(upto);
    match variant {
        Variant::Standard => {
            if *sigma <= BigUint::from(r_max.saturating_sub(r[0])) {
                return Err(OpeaError::Precondition("sigma must exceed max R - R_1".into()));
            }
            out.push(PartitionBounds { lower: sigma.clone(), upper: sigma + r[0], variant });
            for t in 2..=upto {
                let lower = (1..t)
                    .map(|i| &out[i - 1].upper + &out[t - i - 1].upper)
                    .max()
                    .expect("t >= 2");
                let upper = &lower + r[t - 1];
                out.push(PartitionBounds { lower, upper, variant });
            }
        }
        Variant::Extended => {
            if *sigma <= BigUint::from(3 * r_max) {
                return Err(OpeaError::Precondition("extended variant needs sigma > 3 * max R".into()));
            }
            out.push(PartitionBounds { lower: sigma - r[0], upper: sigma.clone(), variant });
            for t in 2..=upto {
                let upper = (1..t)
                    .map(|i| &out[i - 1].lower + &out[t - i - 1].lower)
                    .min()
                    .expect("t >= 2");
                let lower = &upper - r[t - 1];
                out.push(PartitionBounds { lower, upper, variant });
            }
        }
    }
    Ok(out)
}

pub fn boundaries_iterative(key: &DomainKey, variant: Variant, upto: u64) -> Result<Vec<PartitionBounds>> {
    let r: Vec<u64> = key.r.iter().map(|&v| u64::from(v)).collect();
    boundaries_iterative_raw(&r, &key.sigma, variant, upto as usize)
}

fn check_plain(key: &DomainKey, m: u64) -> Result<()> {
    if m < 1 || m > key.t {
        return Err(OpeaError::DomainRange { value: i128::from(m), max: key.t });
    }
    Ok(())
}

/// Uniform draw from the standard partition of `m`.
pub fn encrypt(key: &DomainKey, m: u64, rng: &mut impl RngCore) -> Result<BigUint> {
    check_plain(key, m)?;
    let offset = rng.random_range(0..=key.r(m));
    Ok(key.lower(m) + offset)
}

/// Uniform draw from the extended partition of `m`.
pub fn encrypt_ext(key: &DomainKey, m: u64, rng: &mut impl RngCore) -> Result<BigUint> {
    check_plain(key, m)?;
    let offset = rng.random_range(0..=key.r(m));
    Ok(key.ext_upper(m) - offset)
}

/// Largest `t` with `L[t] <= c`.
pub fn decrypt(key: &DomainKey, c: &BigUint) -> Result<u64> {
    if c.is_zero() {
        return Err(OpeaError::NullCell);
    }
    if *c < key.lower(1) {
        return Err(OpeaError::NotACiphertext(c.clone()));
    }
    let (mut lo, mut hi) = (1u64, key.t_max());
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if key.lower(mid) <= *c {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

/// Smallest `t` with `c <= U'[t]`.
pub fn decrypt_ext(key: &DomainKey, c: &BigUint) -> Result<u64> {
    if c.is_zero() {
        return Err(OpeaError::NullCell);
    }
    let first = key.ext_upper(1) - key.r(1);
    if *c < first {
        return Err(OpeaError::NotACiphertext(c.clone()));
    }
    if *c > key.ext_upper(key.t_max()) {
        return Err(OpeaError::AboveDomain(c.clone()));
    }
    let (mut lo, mut hi) = (1u64, key.t_max());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if *c <= key.ext_upper(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Decrypts a single stored ciphertext, rejecting values that fall outside
/// every partition or above `T`.
pub fn decrypt_exact(key: &DomainKey, c: &BigUint) -> Result<u64> {
    let m = decrypt(key, c)?;
    if m > key.t || *c > key.lower(m) + key.r(m) {
        return Err(OpeaError::NotACiphertext(c.clone()));
    }
    Ok(m)
}

/// Uniform equality threshold `x` in `[R_{T_max}, sigma)`.
pub fn pick_equality_threshold(key: &DomainKey, rng: &mut impl RngCore) -> BigUint {
    let lo = BigUint::from(key.r_max());
    let span = &key.sigma - &lo;
    lo + rng::below(rng, &span)
}

/// Largest `v` with `(v + cardinality) * R_{T_max} - R_1 <= sigma`, clamped
/// to `T_max`; 0 when no value qualifies.
pub fn max_supported_sum(key: &DomainKey, cardinality: u64) -> u64 {
    let r_max = u64::from(key.r_max());
    if r_max == 0 {
        return key.t_max();
    }
    let bound = (&key.sigma + key.r[0]) / r_max;
    let card = BigUint::from(cardinality);
    if bound <= card {
        return 0;
    }
    (bound - card).to_u64().map_or(key.t_max(), |v| v.min(key.t_max()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1() -> DomainKey {
        DomainKey::from_parts(vec![1; 50], BigUint::from(100u32), 10).unwrap()
    }

    fn pair(b: PartitionBounds) -> (u64, u64) {
        (b.lower.try_into().unwrap(), b.upper.try_into().unwrap())
    }

    #[test]
    fn sigma_sizing_examples() {
        let k = derive_domain_key(b"S", 10, 2, 50, 1).unwrap();
        assert_eq!(*k.sigma(), BigUint::from(51u32));
        let k = derive_domain_key(b"S", 1, 1, 1, 1).unwrap();
        assert_eq!(*k.sigma(), BigUint::from(4u32));
        assert_eq!(derive_domain_key(b"S", 10, 2, 50, 8).unwrap(), derive_domain_key(b"S", 10, 2, 50, 8).unwrap());
    }

    #[test]
    fn sizing_errors() {
        assert!(matches!(derive_domain_key(b"S", 0, 1, 1, 8), Err(OpeaError::KeySizing(_))));
        assert!(matches!(derive_domain_key(b"S", 10, 1, 5, 8), Err(OpeaError::KeySizing(_))));
        assert!(matches!(derive_domain_key(b"S", 10, 1, 10, 17), Err(OpeaError::KeySizing(_))));
        assert!(matches!(derive_domain_key(b"S", 10, 1, MAX_T_MAX + 1, 8), Err(OpeaError::KeySizing(_))));
    }

    #[test]
    fn k1_boundaries() {
        let k = k1();
        assert_eq!(pair(boundary_pair(&k, 1).unwrap()), (100, 101));
        assert_eq!(pair(boundary_pair(&k, 5).unwrap()), (508, 509));
        assert_eq!(pair(boundary_pair(&k, 2).unwrap()), (202, 203));
        assert_eq!(pair(ext_boundary_pair(&k, 1).unwrap()), (99, 100));
        assert_eq!(pair(ext_boundary_pair(&k, 2).unwrap()), (197, 198));
        assert_eq!(pair(ext_boundary_pair(&k, 5).unwrap()), (491, 492));
        assert!(matches!(boundary_pair(&k, 0), Err(OpeaError::DomainRange { .. })));
        assert!(matches!(boundary_pair(&k, 51), Err(OpeaError::DomainRange { .. })));
    }

    #[test]
    fn k2_iterative() {
        let got: Vec<_> = boundaries_iterative_raw(&[1, 3, 1], &BigUint::from(10u32), Variant::Standard, 3)
            .unwrap()
            .into_iter()
            .map(pair)
            .collect();
        assert_eq!(got, vec![(10, 11), (22, 25), (36, 37)]);
        assert!(boundaries_iterative_raw(&[1, 3, 1], &BigUint::from(9u32), Variant::Extended, 3).is_err());
    }

    #[test]
    fn decrypt_examples() {
        let k = k1();
        let d = |v: u32| decrypt(&k, &BigUint::from(v)).unwrap();
        assert_eq!(d(203), 2);
        assert_eq!(d(100), 1);
        assert_eq!(d(507), 4);
        assert_eq!(decrypt_ext(&k, &BigUint::from(493u32)).unwrap(), 6);
        assert_eq!(decrypt(&k, &BigUint::zero()), Err(OpeaError::NullCell));
        assert!(matches!(decrypt(&k, &BigUint::from(99u32)), Err(OpeaError::NotACiphertext(_))));
        assert!(matches!(decrypt_exact(&k, &BigUint::from(150u32)), Err(OpeaError::NotACiphertext(_))));
    }

    #[test]
    fn encrypt_examples() {
        let k = k1();
        let mut g = rng::seeded(7);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            seen.insert(encrypt(&k, 2, &mut g).unwrap().to_u64().unwrap());
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![202, 203]);
        for _ in 0..50 {
            let c = encrypt_ext(&k, 3, &mut g).unwrap().to_u64().unwrap();
            assert!(c == 295 || c == 296);
        }
        let z = DomainKey::from_parts(vec![0, 1, 1], BigUint::from(100u32), 3).unwrap();
        assert_eq!(encrypt(&z, 1, &mut g).unwrap(), BigUint::from(100u32));
        assert!(matches!(encrypt(&k, 11, &mut g), Err(OpeaError::DomainRange { .. })));
    }

    #[test]
    fn threshold_range() {
        let k = k1();
        let mut g = rng::seeded(1);
        for _ in 0..500 {
            let x = pick_equality_threshold(&k, &mut g).to_u64().unwrap();
            assert!((1..100).contains(&x));
        }
        let k8 = DomainKey::from_parts(vec![8; 4], BigUint::from(100u32), 4).unwrap();
        for _ in 0..500 {
            let x = pick_equality_threshold(&k8, &mut g).to_u64().unwrap();
            assert!((8..100).contains(&x));
        }
        let tight = DomainKey::from_parts(vec![5; 3], BigUint::from(16u32), 3).unwrap();
        for _ in 0..100 {
            let x = pick_equality_threshold(&tight, &mut g).to_u64().unwrap();
            assert!((5..16).contains(&x));
        }
    }

    #[test]
    fn supported_sum_examples() {
        assert_eq!(max_supported_sum(&k1(), 2), 50);
        let k = DomainKey::from_parts(vec![10; 200], BigUint::from(1000u32), 100).unwrap();
        assert_eq!(max_supported_sum(&k, 5), 96);
        assert_eq!(max_supported_sum(&k, 500), 0);
    }
}
