//! Owner key material: a master seed, per-domain keys derived from it, and
//! the identifier-anonymization key.
//!
//! Key file (`keys.toml`):
//!
//! ```toml
//! version = 1
//! master_seed = "<64 hex digits>"
//! [[domain]]
//! label = "quantity"
//! t = 50
//! t_max = 400000
//! max_group = 20000
//! r_bits = 8
//! sigma = "106000000"
//! ```
//!
//! `R` is never stored; it is re-derived from the seed and `sigma` is
//! checked against the derivation on load.

use std::collections::BTreeMap;

use hmac::{Hmac, KeyInit, Mac};
use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::manifest::Manifest;
use crate::opea::{derive_domain_key, DomainKey, OpeaError};

pub const KEYS_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("key file syntax: {0}")]
    Syntax(String),
    #[error("key file version {found}, expected {KEYS_VERSION}")]
    Version { found: u32 },
    #[error("key file: {0}")]
    Invalid(String),
    #[error("domain {domain}: {source}")]
    Opea { domain: String, source: OpeaError },
    #[error("no key for domain {0}")]
    MissingDomain(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainRecord {
    label: String,
    t: u64,
    t_max: u64,
    max_group: u64,
    r_bits: u32,
    sigma: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    version: u32,
    master_seed: String,
    #[serde(default, rename = "domain")]
    domains: Vec<DomainRecord>,
}

#[derive(Clone)]
pub struct KeyRing {
    master: [u8; 32],
    name_key: [u8; 32],
    domains: BTreeMap<String, DomainKey>,
}

impl std::fmt::Debug for KeyRing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyRing").field("domains", &self.domains).finish_non_exhaustive()
    }
}

fn sub_seed(master: &[u8; 32], label: &str) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(master);
    h.update(b"domain:");
    h.update(label.as_bytes());
    h.finalize().to_vec()
}

fn name_key(master: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master);
    h.update(b"names");
    h.finalize().into()
}

/// Keyed pseudorandom rename of an identifier: `h` followed by 24 hex digits.
pub fn anonymize_identifier(name: &str, key: &[u8]) -> String {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(name.as_bytes());
    let tag = mac.finalize().into_bytes();
    format!("h{}", hex::encode(&tag[..12]))
}

impl KeyRing {
    pub fn generate_master(rng: &mut impl RngCore) -> [u8; 32] {
        let mut m = [0u8; 32];
        rng.fill_bytes(&mut m);
        m
    }

    /// Derives one key per manifest domain from `master`.
    pub fn derive(master: [u8; 32], manifest: &Manifest) -> Result<Self, KeyError> {
        let mut domains = BTreeMap::new();
        for (id, d) in &manifest.domains {
            let key = derive_domain_key(&sub_seed(&master, id), d.t, d.max_group, d.max_sum, d.r_bits)
                .map_err(|source| KeyError::Opea { domain: id.clone(), source })?;
            domains.insert(id.clone(), key);
        }
        Ok(KeyRing { master, name_key: name_key(&master), domains })
    }

    /// Key ring with explicit domain keys (fixtures).
    pub fn from_keys(master: [u8; 32], domains: BTreeMap<String, DomainKey>) -> Self {
        KeyRing { master, name_key: name_key(&master), domains }
    }

    pub fn domain(&self, id: &str) -> Result<&DomainKey, KeyError> {
        self.domains.get(id).ok_or_else(|| KeyError::MissingDomain(id.to_string()))
    }

    pub fn domains(&self) -> impl Iterator<Item = (&String, &DomainKey)> {
        self.domains.iter()
    }

    pub fn anon_table(&self, table: &str) -> String {
        anonymize_identifier(table, &self.name_key)
    }

    /// Columns are named from the `TABLE.COLUMN` pre-image so equal column
    /// names in different tables stay unlinkable.
    pub fn anon_column(&self, table: &str, column: &str) -> String {
        anonymize_identifier(&format!("{table}.{column}"), &self.name_key)
    }

    pub fn anon_extension(&self, table: &str, column: &str) -> String {
        format!("{}_Extension", self.anon_column(table, column))
    }

    pub fn to_toml(&self) -> String {
        let file = KeyFile {
            version: KEYS_VERSION,
            master_seed: hex::encode(self.master),
            domains: self
                .domains
                .iter()
                .map(|(label, k)| DomainRecord {
                    label: label.clone(),
                    t: k.t(),
                    t_max: k.t_max(),
                    max_group: k.max_group(),
                    r_bits: k.r_bits(),
                    sigma: k.sigma().to_string(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("key file serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, KeyError> {
        let file: KeyFile = toml::from_str(text).map_err(|e| KeyError::Syntax(e.to_string()))?;
        if file.version != KEYS_VERSION {
            return Err(KeyError::Version { found: file.version });
        }
        let bytes = hex::decode(&file.master_seed).map_err(|e| KeyError::Invalid(format!("master_seed: {e}")))?;
        let master: [u8; 32] =
            bytes.try_into().map_err(|_| KeyError::Invalid("master_seed must be 32 bytes".into()))?;
        let mut domains = BTreeMap::new();
        for d in file.domains {
            let key = derive_domain_key(&sub_seed(&master, &d.label), d.t, d.max_group, d.t_max, d.r_bits)
                .map_err(|source| KeyError::Opea { domain: d.label.clone(), source })?;
            let sigma: BigUint =
                d.sigma.parse().map_err(|_| KeyError::Invalid(format!("domain {}: bad sigma", d.label)))?;
            if *key.sigma() != sigma {
                return Err(KeyError::Invalid(format!("domain {}: sigma does not match the derived key", d.label)));
            }
            domains.insert(d.label, key);
        }
        Ok(KeyRing { master, name_key: name_key(&master), domains })
    }

    /// Checks that every manifest domain has a key with matching sizing.
    pub fn check_manifest(&self, manifest: &Manifest) -> Result<(), KeyError> {
        for (id, d) in &manifest.domains {
            let k = self.domain(id)?;
            if k.t() != d.t || k.t_max() != d.max_sum || k.max_group() != d.max_group || k.r_bits() != d.r_bits {
                return Err(KeyError::Invalid(format!("domain {id}: key sizing differs from the manifest")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn anonymization_is_deterministic_and_case_sensitive() {
        let k = [7u8; 32];
        assert_eq!(anonymize_identifier("SUPPLIER", &k), anonymize_identifier("SUPPLIER", &k));
        assert_ne!(anonymize_identifier("SUPPLIER", &k), anonymize_identifier("supplier", &k));
        assert_ne!(anonymize_identifier("SUPPLIER", &k), anonymize_identifier("SUPPLIER", &[8u8; 32]));
        let a = anonymize_identifier("X", &k);
        assert_eq!(a.len(), 25);
        assert!(a.starts_with('h'));
    }

    #[test]
    fn anonymization_has_no_collisions_on_ten_thousand_names() {
        let k = [1u8; 32];
        let set: HashSet<String> = (0..10_000).map(|i| anonymize_identifier(&format!("NAME_{i}"), &k)).collect();
        assert_eq!(set.len(), 10_000);
    }

    #[test]
    fn key_file_round_trip() {
        let m = Manifest::from_toml(
            "version = 1\n[[domain]]\nid = \"a\"\nkind = \"numeric\"\nmin = \"1\"\nmax = \"40\"\nmax_sum = 500\nmax_group = 9\n",
        )
        .unwrap();
        let ring = KeyRing::derive([3u8; 32], &m).unwrap();
        let text = ring.to_toml();
        let back = KeyRing::from_toml(&text).unwrap();
        assert_eq!(back.domain("a").unwrap(), ring.domain("a").unwrap());
        back.check_manifest(&m).unwrap();
        let tampered = text.replace(&ring.domain("a").unwrap().sigma().to_string(), "12345");
        assert!(matches!(KeyRing::from_toml(&tampered), Err(KeyError::Invalid(_))));
        let other = KeyRing::derive([4u8; 32], &m).unwrap();
        assert_ne!(other.domain("a").unwrap(), ring.domain("a").unwrap());
    }
}
