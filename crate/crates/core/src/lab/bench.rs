//! Per-operation timings of the cipher primitives on one thread.

use std::hint::black_box;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::opea::{self, DomainKey, OpeaError};
use crate::rng;

#[derive(Clone, Debug, Serialize)]
pub struct OpTiming {
    pub op: &'static str,
    pub t: u64,
    pub n: usize,
    pub median_ns: u64,
    pub p90_ns: u64,
    pub p99_ns: u64,
    pub mean_ns: f64,
}

fn summarize(op: &'static str, t: u64, mut samples: Vec<u64>) -> OpTiming {
    samples.sort_unstable();
    let at = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
    let mean = samples.iter().sum::<u64>() as f64 / samples.len() as f64;
    OpTiming { op, t, n: samples.len(), median_ns: at(0.5), p90_ns: at(0.9), p99_ns: at(0.99), mean_ns: mean }
}

fn time<T>(f: impl FnOnce() -> T) -> u64 {
    let start = Instant::now();
    black_box(f());
    start.elapsed().as_nanos() as u64
}

/// Key with `T` plaintexts, 16-bit partition lengths and no sum headroom.
pub fn bench_key(t: u64, seed: u64) -> Result<DomainKey, OpeaError> {
    opea::derive_domain_key(&seed.to_le_bytes(), t, 1, t, 16)
}

/// Times `n` calls each of encrypt, decrypt, `EqualityCom` and a
/// partition boundary lookup, on uniformly drawn plaintexts.
pub fn run(key: &DomainKey, n: usize, seed: u64) -> Result<Vec<OpTiming>, OpeaError> {
    assert!(n > 0, "n must be positive");
    let t = key.t();
    let mut g = rng::seeded(seed);
    let plain: Vec<u64> = (0..n).map(|_| g.random_range(1..=t)).collect();
    let x = opea::pick_equality_threshold(key, &mut g);

    let mut enc = Vec::with_capacity(n);
    let mut ciphers = Vec::with_capacity(n);
    for &m in &plain {
        let start = Instant::now();
        let c = opea::encrypt(key, m, &mut g)?;
        enc.push(start.elapsed().as_nanos() as u64);
        ciphers.push(c);
    }
    let mut dec = Vec::with_capacity(n);
    for (c, &m) in ciphers.iter().zip(&plain) {
        let start = Instant::now();
        let got = opea::decrypt(key, c)?;
        dec.push(start.elapsed().as_nanos() as u64);
        assert_eq!(got, m, "round trip");
    }
    let eq: Vec<u64> = ciphers
        .iter()
        .zip(ciphers.iter().rev())
        .map(|(a, b)| time(|| cipherdb_cloud::equality_com(&x, a, b)))
        .collect();
    let bounds: Vec<u64> = plain.iter().map(|&m| time(|| opea::boundary_pair(key, m))).collect();
    Ok(vec![
        summarize("encrypt", t, enc),
        summarize("decrypt", t, dec),
        summarize("equality_com", t, eq),
        summarize("boundary_pair", t, bounds),
    ])
}

pub fn get<'a>(rows: &'a [OpTiming], op: &str) -> Option<&'a OpTiming> {
    rows.iter().find(|r| r.op == op)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_schema_is_stable() {
        let key = bench_key(1000, 1).unwrap();
        let rows = run(&key, 200, 2).unwrap();
        let ops: Vec<&str> = rows.iter().map(|r| r.op).collect();
        assert_eq!(ops, ["encrypt", "decrypt", "equality_com", "boundary_pair"]);
        let csv = super::super::to_csv(&rows);
        assert!(csv.starts_with("op,t,n,median_ns,p90_ns,p99_ns,mean_ns\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
