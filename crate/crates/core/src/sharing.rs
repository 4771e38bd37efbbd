//! Splitting a reading into one share per aggregator, and reconstruction.
//!
//! Two schemes are provided. `NaiveEqualSplit` hands each aggregator an equal
//! part of the reading (remainder on share 0). It is deterministic and every
//! share pins the reading down to a few units. `AdditiveRandom` is additive
//! secret sharing over `Z_p`: shares `1..m` are uniform and share 0 closes the
//! sum, so any proper subset of shares is uniformly distributed regardless of
//! the secret.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Interval, MeterId, Reading, SimConfig};
use crate::ring::Modulus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShareScheme {
    NaiveEqualSplit,
    AdditiveRandom,
}

/// The `m` shares of one reading; `shares[j]` goes to aggregator `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareVector {
    pub meter: MeterId,
    pub interval: Interval,
    pub shares: Vec<u64>,
    pub scheme: ShareScheme,
}

pub fn split<R: Rng + ?Sized>(
    reading: &Reading,
    config: &SimConfig,
    rng: &mut R,
) -> Result<ShareVector> {
    let shares = split_value(
        reading.energy,
        config.m_aggregators() as usize,
        config.scheme(),
        config.modulus(),
        rng,
    )?;
    Ok(ShareVector {
        meter: reading.meter,
        interval: reading.interval,
        shares,
        scheme: config.scheme(),
    })
}

/// Scheme-level split of a bare value into `m` shares.
pub fn split_value<R: Rng + ?Sized>(
    energy: u64,
    m: usize,
    scheme: ShareScheme,
    modulus: Modulus,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if energy >= modulus.get() {
        return Err(Error::Domain(format!(
            "energy {energy} not below modulus {}",
            modulus.get()
        )));
    }
    if m == 0 {
        return Err(Error::Domain("cannot split into zero shares".into()));
    }
    let shares = match scheme {
        ShareScheme::NaiveEqualSplit => (0..m).map(|j| naive_share(energy, m, j)).collect(),
        ShareScheme::AdditiveRandom => {
            let mut shares = vec![0u64; m];
            let mut rest = 0u64;
            for s in shares.iter_mut().skip(1) {
                *s = rng.random_range(0..modulus.get());
                rest = modulus.add(rest, *s);
            }
            shares[0] = modulus.sub(energy, rest);
            shares
        }
    };
    Ok(shares)
}

/// The share aggregator `index` receives for `energy` under `NaiveEqualSplit`.
pub fn naive_share(energy: u64, m: usize, index: usize) -> u64 {
    let part = energy / m as u64;
    if index == 0 {
        part + energy % m as u64
    } else {
        part
    }
}

pub fn reconstruct(shares: &ShareVector, config: &SimConfig) -> Result<u64> {
    let m = config.m_aggregators() as usize;
    if shares.shares.len() != m {
        return Err(Error::Domain(format!(
            "expected {m} shares for {} at {}, got {}",
            shares.meter,
            shares.interval,
            shares.shares.len()
        )));
    }
    Ok(config.modulus().sum(shares.shares.iter().copied()))
}

/// How observed share values are keyed in a [`ShareHistogram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binning {
    /// Raw ring elements.
    Exact,
    /// `k` equal-width buckets over `0..p`.
    Buckets(u64),
}

impl Binning {
    fn key(self, x: u64, modulus: Modulus) -> u64 {
        match self {
            Binning::Exact => x,
            Binning::Buckets(k) => ((x as u128 * k as u128) / modulus.get() as u128) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareHistogram {
    pub binning: Binning,
    pub subset_size: usize,
    pub trials: u64,
    /// Keyed by the (binned) tuple of shares `0..subset_size`.
    pub counts: BTreeMap<Vec<u64>, u64>,
}

impl ShareHistogram {
    /// Dense counts for a single-share bucketed histogram, indexed by bucket.
    pub fn bucket_counts(&self) -> Option<Vec<u64>> {
        match (self.binning, self.subset_size) {
            (Binning::Buckets(k), 1) => {
                let mut dense = vec![0; k as usize];
                for (key, &c) in &self.counts {
                    dense[key[0] as usize] += c;
                }
                Some(dense)
            }
            _ => None,
        }
    }
}

/// Empirical distribution of the first `subset_size` shares over `trials`
/// fresh splits of the same secret.
pub fn partial_view_distribution<R: Rng + ?Sized>(
    secret: u64,
    subset_size: usize,
    trials: u64,
    binning: Binning,
    config: &SimConfig,
    rng: &mut R,
) -> Result<ShareHistogram> {
    let m = config.m_aggregators() as usize;
    if subset_size >= m {
        return Err(Error::Domain(format!(
            "subset of {subset_size} shares is not a proper subset of {m}"
        )));
    }
    if let Binning::Buckets(0) = binning {
        return Err(Error::Domain("bucket count must be positive".into()));
    }
    let modulus = config.modulus();
    let mut counts = BTreeMap::new();
    for _ in 0..trials {
        let shares = split_value(secret, m, config.scheme(), modulus, rng)?;
        let key: Vec<u64> = shares[..subset_size]
            .iter()
            .map(|&s| binning.key(s, modulus))
            .collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(ShareHistogram {
        binning,
        subset_size,
        trials,
        counts,
    })
}
