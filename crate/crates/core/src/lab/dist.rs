//! Plaintext and ciphertext histograms, and per-partition uniformity of
//! ciphertext draws.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal as NormalDist};

use crate::opea::{self, DomainKey, OpeaError};
use crate::rng;

/// Most bins a partition is split into for the chi-square test.
const MAX_BINS: u64 = 32;
/// Expected draws per bin; partitions with fewer than two such bins are
/// reported but not tested.
const MIN_EXPECTED_PER_BIN: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Sampler {
    Uniform,
    /// Rounded normal draws, redrawn until they land in `1..=T`.
    Normal { mean: f64, sd: f64 },
}

impl Sampler {
    /// Normal sampler centred in the lower half of `1..=t`.
    pub fn skewed(t: u64) -> Self {
        Sampler::Normal { mean: t as f64 * 0.375, sd: t as f64 / 5.0 }
    }

    fn draw(&self, t: u64, g: &mut impl Rng) -> u64 {
        match *self {
            Sampler::Uniform => g.random_range(1..=t),
            Sampler::Normal { mean, sd } => {
                let n = Normal::new(mean, sd).expect("finite positive sd");
                loop {
                    let v = n.sample(g).round();
                    if v >= 1.0 && v <= t as f64 {
                        return v as u64;
                    }
                }
            }
        }
    }

    /// `P[x = m]` for `m` in `1..=t`.
    pub fn pmf(&self, t: u64) -> Vec<f64> {
        match *self {
            Sampler::Uniform => vec![1.0 / t as f64; t as usize],
            Sampler::Normal { mean, sd } => {
                let n = NormalDist::new(mean, sd).expect("finite positive sd");
                let raw: Vec<f64> = (1..=t).map(|m| n.cdf(m as f64 + 0.5) - n.cdf(m as f64 - 0.5)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|p| p / total).collect()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistConfig {
    /// Plaintext domain `1..=t`.
    pub t: u64,
    /// Constant partition length `R_m` for every plaintext.
    pub r: u32,
    pub sampler: Sampler,
    pub samples: usize,
    pub seed: u64,
    /// Width of the ciphertext histogram buckets.
    pub bucket_width: u64,
}

impl DistConfig {
    pub fn new(t: u64, r: u32, sampler: Sampler, samples: usize, seed: u64) -> Self {
        DistConfig { t, r, sampler, samples, seed, bucket_width: u64::from(r).max(1) / 8 + 1 }
    }

    /// `R_m = r` for all `m` and the smallest admissible `sigma`.
    pub fn key(&self) -> Result<DomainKey, OpeaError> {
        DomainKey::from_parts(vec![self.r; self.t as usize], BigUint::from(3 * u64::from(self.r) + 1), self.t)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PlainRow {
    pub m: u64,
    pub count: u64,
    pub expected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CipherRow {
    pub lo: u64,
    pub hi: u64,
    pub count: u64,
    /// Draws predicted by `P[y] = P[x = m] / |partition m|` for `y` in the
    /// partition of `m`.
    pub expected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionStat {
    pub m: u64,
    pub samples: u64,
    /// 0 when too few draws landed in the partition to test it.
    pub bins: u64,
    pub chi2: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug)]
pub struct DistReport {
    pub config: DistConfig,
    pub plain: Vec<PlainRow>,
    pub cipher: Vec<CipherRow>,
    pub partitions: Vec<PartitionStat>,
}

impl DistReport {
    pub fn tested(&self) -> impl Iterator<Item = &PartitionStat> {
        self.partitions.iter().filter(|p| p.bins > 0)
    }

    /// Share of tested partitions whose p-value exceeds `alpha`.
    pub fn pass_fraction(&self, alpha: f64) -> f64 {
        let (pass, total) = self.tested().fold((0usize, 0usize), |(p, n), s| (p + usize::from(s.p_value > alpha), n + 1));
        if total == 0 {
            return 0.0;
        }
        pass as f64 / total as f64
    }

    pub fn summary(&self) -> String {
        let tested = self.tested().count();
        let min_p = self.tested().map(|s| s.p_value).fold(f64::INFINITY, f64::min);
        format!(
            "T={} R={} samples={} partitions tested={}/{} pass(p>0.01)={:.4} min p={:.4}",
            self.config.t,
            self.config.r,
            self.config.samples,
            tested,
            self.partitions.len(),
            self.pass_fraction(0.01),
            min_p
        )
    }
}

/// Encrypts `samples` draws from the sampler and tabulates them.
pub fn simulate(cfg: &DistConfig) -> Result<DistReport, OpeaError> {
    let key = cfg.key()?;
    let mut g = rng::seeded(cfg.seed);
    let cells = u64::from(cfg.r) + 1;
    let lower: Vec<u64> = (1..=cfg.t)
        .map(|m| opea::boundary_pair(&key, m).map(|b| b.lower.to_u64().expect("small key")))
        .collect::<Result<_, _>>()?;
    let first = lower[0];
    let last = lower[lower.len() - 1] + u64::from(cfg.r);
    let width = cfg.bucket_width.max(1);
    let mut plain = vec![0u64; cfg.t as usize];
    let mut offsets = vec![vec![0u64; cells as usize]; cfg.t as usize];
    let mut buckets = vec![0u64; ((last - first) / width + 1) as usize];
    for _ in 0..cfg.samples {
        let m = cfg.sampler.draw(cfg.t, &mut g);
        let c = opea::encrypt(&key, m, &mut g)?.to_u64().expect("small key");
        let i = (m - 1) as usize;
        plain[i] += 1;
        offsets[i][(c - lower[i]) as usize] += 1;
        buckets[((c - first) / width) as usize] += 1;
    }

    let pmf = cfg.sampler.pmf(cfg.t);
    let n = cfg.samples as f64;
    let plain_rows =
        plain.iter().zip(&pmf).enumerate().map(|(i, (&count, p))| PlainRow { m: i as u64 + 1, count, expected: n * p }).collect();

    let mut cipher_rows: Vec<CipherRow> = buckets
        .iter()
        .enumerate()
        .map(|(b, &count)| {
            let lo = first + b as u64 * width;
            CipherRow { lo, hi: lo + width - 1, count, expected: 0.0 }
        })
        .collect();
    for (i, &lo) in lower.iter().enumerate() {
        let hi = lo + u64::from(cfg.r);
        let per_cell = n * pmf[i] / cells as f64;
        for b in ((lo - first) / width)..=((hi - first) / width) {
            let row = &mut cipher_rows[b as usize];
            let overlap = row.hi.min(hi) - row.lo.max(lo) + 1;
            row.expected += per_cell * overlap as f64;
        }
    }

    let partitions = offsets.iter().enumerate().map(|(i, counts)| chi_square(i as u64 + 1, counts)).collect();
    Ok(DistReport { config: cfg.clone(), plain: plain_rows, cipher: cipher_rows, partitions })
}

/// Pearson test of the offsets against the uniform distribution, with the
/// cells grouped into contiguous bins of near-equal size.
fn chi_square(m: u64, counts: &[u64]) -> PartitionStat {
    let samples: u64 = counts.iter().sum();
    let cells = counts.len() as u64;
    let bins = (samples / MIN_EXPECTED_PER_BIN).min(MAX_BINS).min(cells);
    if bins < 2 {
        return PartitionStat { m, samples, bins: 0, chi2: 0.0, p_value: f64::NAN };
    }
    let mut chi2 = 0.0;
    let mut start = 0u64;
    for b in 0..bins {
        let end = (b + 1) * cells / bins;
        let observed: u64 = counts[start as usize..end as usize].iter().sum();
        let expected = samples as f64 * (end - start) as f64 / cells as f64;
        chi2 += (observed as f64 - expected).powi(2) / expected;
        start = end;
    }
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    PartitionStat { m, samples, bins, chi2, p_value: dist.sf(chi2) }
}
