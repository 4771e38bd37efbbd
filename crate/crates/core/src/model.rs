//! Domain types shared across the simulator: meters, aggregators, intervals,
//! readings and the simulation configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::Modulus;
use crate::sharing::ShareScheme;

/// Thirty days of 15-minute slots.
pub const DEFAULT_INTERVALS_PER_PERIOD: u32 = 2880;
pub const INTERVALS_PER_DAY: u32 = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeterId(pub u32);

impl fmt::Display for MeterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SM_{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AggregatorId(pub u32);

impl fmt::Display for AggregatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AG_{}", self.0)
    }
}

/// A 15-minute metering slot, identified by its ordinal from the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Interval(pub u32);

impl Interval {
    pub const DURATION_MINUTES: u32 = 15;

    pub fn ordinal(self) -> u32 {
        self.0
    }

    pub fn next(self) -> Interval {
        Interval(self.0 + 1)
    }

    /// The `len` consecutive intervals starting at `self`.
    pub fn span(self, len: u32) -> impl Iterator<Item = Interval> + Clone {
        (self.0..self.0 + len).map(Interval)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t_{}", self.0)
    }
}

/// One meter's consumption for one interval, in watt-hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reading {
    pub meter: MeterId,
    pub interval: Interval,
    pub energy: u64,
}

impl Reading {
    pub fn new(meter: MeterId, interval: Interval, energy: u64) -> Self {
        Reading {
            meter,
            interval,
            energy,
        }
    }
}

/// Validated simulation parameters.
///
/// Outside table-reproduction mode both the meter count and the aggregator
/// count must exceed two. Table-reproduction mode relaxes both to at least one
/// so that the comparison rows for one and two aggregators can be produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    n_meters: u32,
    m_aggregators: u32,
    scheme: ShareScheme,
    modulus: Modulus,
    seed: u64,
    intervals_per_period: u32,
    table_reproduction: bool,
}

impl SimConfig {
    pub fn builder(n_meters: u32, m_aggregators: u32) -> SimConfigBuilder {
        SimConfigBuilder {
            config: SimConfig {
                n_meters,
                m_aggregators,
                scheme: ShareScheme::AdditiveRandom,
                modulus: Modulus::default(),
                seed: 0,
                intervals_per_period: DEFAULT_INTERVALS_PER_PERIOD,
                table_reproduction: false,
            },
        }
    }

    /// Shorthand for a default config with the given sizes.
    pub fn new(n_meters: u32, m_aggregators: u32) -> Result<Self> {
        Self::builder(n_meters, m_aggregators).build()
    }

    pub fn n_meters(&self) -> u32 {
        self.n_meters
    }

    pub fn m_aggregators(&self) -> u32 {
        self.m_aggregators
    }

    pub fn scheme(&self) -> ShareScheme {
        self.scheme
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn intervals_per_period(&self) -> u32 {
        self.intervals_per_period
    }

    pub fn table_reproduction(&self) -> bool {
        self.table_reproduction
    }

    pub fn meters(&self) -> impl Iterator<Item = MeterId> + Clone {
        (0..self.n_meters).map(MeterId)
    }

    pub fn aggregators(&self) -> impl Iterator<Item = AggregatorId> + Clone {
        (0..self.m_aggregators).map(AggregatorId)
    }

    /// Exclusive upper bound on a single reading: `modulus / n`, so that an
    /// interval total over all meters never wraps the ring.
    pub fn energy_bound(&self) -> u64 {
        self.modulus.get() / self.n_meters as u64
    }

    pub fn check_reading(&self, reading: &Reading) -> Result<()> {
        if reading.meter.0 >= self.n_meters {
            return Err(Error::Domain(format!(
                "{} outside 0..{}",
                reading.meter, self.n_meters
            )));
        }
        if reading.energy >= self.energy_bound() {
            return Err(Error::Domain(format!(
                "reading {} Wh for {} at {} exceeds bound {}",
                reading.energy,
                reading.meter,
                reading.interval,
                self.energy_bound()
            )));
        }
        Ok(())
    }

    /// Builder pre-filled with this configuration.
    pub fn to_builder(&self) -> SimConfigBuilder {
        SimConfigBuilder {
            config: self.clone(),
        }
    }

    /// Same configuration under a different seed.
    pub fn reseeded(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn with_scheme(&self, scheme: ShareScheme) -> SimConfig {
        SimConfig {
            scheme,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.table_reproduction {
            if self.n_meters < 1 {
                return Err(Error::Config("n_meters must be >= 1".into()));
            }
            if self.m_aggregators < 1 {
                return Err(Error::Config("m_aggregators must be >= 1".into()));
            }
        } else {
            if self.n_meters <= 2 {
                return Err(Error::Config(format!(
                    "n_meters must be > 2 (got {})",
                    self.n_meters
                )));
            }
            if self.m_aggregators <= 2 {
                return Err(Error::Config(format!(
                    "m_aggregators must be > 2 (got {})",
                    self.m_aggregators
                )));
            }
        }
        if self.intervals_per_period == 0 {
            return Err(Error::Config("intervals_per_period must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Blank lines and `#` comments are ignored.
    pub fn from_kv_str(text: &str) -> Result<SimConfig> {
        let mut n = None;
        let mut m = None;
        let mut b = SimConfig::builder(0, 0);
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got {raw:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| Error::Parse {
                line: line_no,
                message: format!("{key}: {e}"),
            };
            match key {
                "n_meters" => n = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                "m_aggregators" => m = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                "scheme" => b = b.scheme(value.parse().map_err(|e: Error| bad(e.to_string()))?),
                "modulus" => {
                    let p = value.parse::<u64>().map_err(|e| bad(e.to_string()))?;
                    b = b.modulus(Modulus::new(p)?);
                }
                "seed" => {
                    b = b.seed(
                        value
                            .parse()
                            .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                    )
                }
                "intervals_per_period" => {
                    b = b.intervals_per_period(
                        value
                            .parse()
                            .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                    )
                }
                "table_reproduction" => {
                    b = b.table_reproduction(
                        value
                            .parse()
                            .map_err(|e: std::str::ParseBoolError| bad(e.to_string()))?,
                    )
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        let n = n.ok_or_else(|| Error::Config("missing key n_meters".into()))?;
        let m = m.ok_or_else(|| Error::Config("missing key m_aggregators".into()))?;
        b.config.n_meters = n;
        b.config.m_aggregators = m;
        b.build()
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "n_meters = {}\nm_aggregators = {}\nscheme = {}\nmodulus = {}\nseed = {}\nintervals_per_period = {}\ntable_reproduction = {}\n",
            self.n_meters,
            self.m_aggregators,
            self.scheme,
            self.modulus.get(),
            self.seed,
            self.intervals_per_period,
            self.table_reproduction
        )
    }

    pub fn load(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }
}

/// Total number of nodes, `m * n`.
pub fn node_count(config: &SimConfig) -> u64 {
    config.m_aggregators as u64 * config.n_meters as u64
}

/// The anonymity set is the set of meters. Fails for fewer than three meters,
/// where anonymity among users is not meaningful.
pub fn anonymity_set_size(config: &SimConfig) -> Result<u32> {
    if config.n_meters <= 2 {
        return Err(Error::Domain(format!(
            "anonymity set requires more than two users (got {})",
            config.n_meters
        )));
    }
    Ok(config.n_meters)
}

#[derive(Debug, Clone)]
pub struct SimConfigBuilder {
    config: SimConfig,
}

impl SimConfigBuilder {
    pub fn n_meters(mut self, n: u32) -> Self {
        self.config.n_meters = n;
        self
    }

    pub fn m_aggregators(mut self, m: u32) -> Self {
        self.config.m_aggregators = m;
        self
    }

    pub fn scheme(mut self, scheme: ShareScheme) -> Self {
        self.config.scheme = scheme;
        self
    }

    pub fn modulus(mut self, modulus: Modulus) -> Self {
        self.config.modulus = modulus;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }

    pub fn intervals_per_period(mut self, intervals: u32) -> Self {
        self.config.intervals_per_period = intervals;
        self
    }

    pub fn table_reproduction(mut self, on: bool) -> Self {
        self.config.table_reproduction = on;
        self
    }

    pub fn build(self) -> Result<SimConfig> {
        self.config.validate()?;
        Ok(self.config)
    }
}

impl FromStr for ShareScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "naive-equal-split" | "naive" | "naiveequalsplit" => Ok(ShareScheme::NaiveEqualSplit),
            "additive-random" | "additive" | "additiverandom" => Ok(ShareScheme::AdditiveRandom),
            other => Err(Error::Config(format!("unknown share scheme {other:?}"))),
        }
    }
}

impl fmt::Display for ShareScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShareScheme::NaiveEqualSplit => "naive-equal-split",
            ShareScheme::AdditiveRandom => "additive-random",
        })
    }
}
