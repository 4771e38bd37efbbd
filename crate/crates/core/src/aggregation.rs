//! Aggregator and supplier state.
//!
//! Data only moves downstream: meters push shares into aggregator ledgers,
//! aggregators release per-interval column sums to the supplier, and at the
//! end of a billing period each aggregator releases one per-meter share sum
//! for the whole period. The supplier reconstructs interval totals and period
//! bills; no individual per-interval reading is ever reconstructed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loadgen::LoadProfile;
use crate::model::{AggregatorId, Interval, MeterId, Reading, SimConfig};
use crate::ring::Modulus;
use crate::rng;
use crate::sharing::{self, ShareScheme};

/// A contiguous run of intervals billed together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingPeriod {
    pub start: Interval,
    pub len: u32,
}

impl BillingPeriod {
    pub fn new(start: Interval, len: u32) -> Self {
        BillingPeriod { start, len }
    }

    pub fn intervals(&self) -> impl Iterator<Item = Interval> + Clone {
        self.start.span(self.len)
    }
}

/// One aggregator's period-level release: for each meter, the sum of that
/// meter's shares over every interval of the period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodReveal {
    pub aggregator: AggregatorId,
    pub period: BillingPeriod,
    pub meter_sums: BTreeMap<MeterId, u64>,
}

/// Shares received by one aggregator. Append-only per (meter, interval).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatorLedger {
    id: AggregatorId,
    n_meters: u32,
    modulus: Modulus,
    cells: BTreeMap<(MeterId, Interval), u64>,
    column_sums: BTreeMap<Interval, u64>,
    reported: BTreeMap<Interval, u32>,
}

impl AggregatorLedger {
    pub fn new(id: AggregatorId, config: &SimConfig) -> Self {
        AggregatorLedger {
            id,
            n_meters: config.n_meters(),
            modulus: config.modulus(),
            cells: BTreeMap::new(),
            column_sums: BTreeMap::new(),
            reported: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> AggregatorId {
        self.id
    }

    pub fn cells(&self) -> &BTreeMap<(MeterId, Interval), u64> {
        &self.cells
    }

    /// Running column sums, including intervals still awaiting meters.
    pub fn column_sums(&self) -> &BTreeMap<Interval, u64> {
        &self.column_sums
    }

    pub fn intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.column_sums.keys().copied()
    }

    pub fn ingest_share(&mut self, meter: MeterId, interval: Interval, share: u64) -> Result<()> {
        if meter.0 >= self.n_meters {
            return Err(Error::Protocol(format!(
                "{} received share from unknown meter {meter}",
                self.id
            )));
        }
        if share >= self.modulus.get() {
            return Err(Error::Protocol(format!(
                "{} received non-canonical share from {meter} at {interval}",
                self.id
            )));
        }
        if self.cells.contains_key(&(meter, interval)) {
            return Err(Error::Protocol(format!(
                "{} already holds a share from {meter} at {interval}",
                self.id
            )));
        }
        self.cells.insert((meter, interval), share);
        let sum = self.column_sums.entry(interval).or_insert(0);
        *sum = self.modulus.add(*sum, share);
        *self.reported.entry(interval).or_insert(0) += 1;
        Ok(())
    }

    fn missing_meters(&self, interval: Interval) -> Vec<MeterId> {
        (0..self.n_meters)
            .map(MeterId)
            .filter(|&m| !self.cells.contains_key(&(m, interval)))
            .collect()
    }

    /// Column sum for a complete interval. Partial sums are never released.
    pub fn interval_column_sum(&self, interval: Interval) -> Result<u64> {
        if self.reported.get(&interval).copied().unwrap_or(0) < self.n_meters {
            let missing = self.missing_meters(interval);
            return Err(Error::Availability(format!(
                "{} interval {interval} incomplete; missing {}",
                self.id,
                missing
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        Ok(self.column_sums[&interval])
    }

    /// Per-meter share sums over a full billing period.
    pub fn reveal_period(&self, period: &BillingPeriod) -> Result<PeriodReveal> {
        let mut meter_sums = BTreeMap::new();
        for meter in (0..self.n_meters).map(MeterId) {
            let mut sum = 0u64;
            for t in period.intervals() {
                let share = self.cells.get(&(meter, t)).ok_or_else(|| {
                    Error::Availability(format!(
                        "{} has no share from {meter} at {t}; period starting {} incomplete",
                        self.id, period.start
                    ))
                })?;
                sum = self.modulus.add(sum, *share);
            }
            meter_sums.insert(meter, sum);
        }
        Ok(PeriodReveal {
            aggregator: self.id,
            period: *period,
            meter_sums,
        })
    }
}

/// Supplier-side totals and bills.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplierState {
    m_aggregators: u32,
    modulus: Modulus,
    interval_totals: BTreeMap<Interval, u64>,
    period_bills: BTreeMap<MeterId, u64>,
}

impl SupplierState {
    pub fn new(config: &SimConfig) -> Self {
        SupplierState {
            m_aggregators: config.m_aggregators(),
            modulus: config.modulus(),
            interval_totals: BTreeMap::new(),
            period_bills: BTreeMap::new(),
        }
    }

    pub fn interval_totals(&self) -> &BTreeMap<Interval, u64> {
        &self.interval_totals
    }

    pub fn period_bills(&self) -> &BTreeMap<MeterId, u64> {
        &self.period_bills
    }

    fn check_aggregators<I: IntoIterator<Item = AggregatorId>>(
        &self,
        ids: I,
        what: &str,
    ) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in ids {
            if id.0 >= self.m_aggregators {
                return Err(Error::Protocol(format!(
                    "{what} from unknown aggregator {id}"
                )));
            }
            if !seen.insert(id) {
                return Err(Error::Protocol(format!("duplicate {what} from {id}")));
            }
        }
        if seen.len() != self.m_aggregators as usize {
            let missing: Vec<String> = (0..self.m_aggregators)
                .map(AggregatorId)
                .filter(|id| !seen.contains(id))
                .map(|id| id.to_string())
                .collect();
            return Err(Error::Availability(format!(
                "{what} missing from {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    /// Records the interval total from exactly one column sum per aggregator.
    pub fn supplier_collect(
        &mut self,
        interval: Interval,
        column_sums: &[(AggregatorId, u64)],
    ) -> Result<u64> {
        self.check_aggregators(column_sums.iter().map(|&(id, _)| id), "column sum")?;
        if self.interval_totals.contains_key(&interval) {
            return Err(Error::Protocol(format!(
                "interval {interval} already collected"
            )));
        }
        let total = self.modulus.sum(column_sums.iter().map(|&(_, s)| s));
        self.interval_totals.insert(interval, total);
        Ok(total)
    }

    /// Reconstructs each meter's period total from one reveal per aggregator.
    /// The resulting bills are what the supplier sends back to meters.
    pub fn compute_bill(
        &mut self,
        period: &BillingPeriod,
        reveals: &[PeriodReveal],
    ) -> Result<BTreeMap<MeterId, u64>> {
        self.check_aggregators(reveals.iter().map(|r| r.aggregator), "period reveal")?;
        if let Some(r) = reveals.iter().find(|r| r.period != *period) {
            return Err(Error::Availability(format!(
                "{} revealed period starting {} ({} intervals), expected {} ({} intervals)",
                r.aggregator, r.period.start, r.period.len, period.start, period.len
            )));
        }
        let meters: BTreeSet<MeterId> = reveals
            .iter()
            .flat_map(|r| r.meter_sums.keys().copied())
            .collect();
        let mut bills = BTreeMap::new();
        for meter in meters {
            let mut bill = 0u64;
            for r in reveals {
                let part = r.meter_sums.get(&meter).ok_or_else(|| {
                    Error::Availability(format!("{} reveal lacks {meter}", r.aggregator))
                })?;
                bill = self.modulus.add(bill, *part);
            }
            bills.insert(meter, bill);
        }
        self.period_bills = bills.clone();
        Ok(bills)
    }
}

/// Column-sum snapshot of one aggregator, for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub aggregator: AggregatorId,
    pub column_sums: Vec<IntervalValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalValue {
    pub interval: Interval,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationCheck {
    pub intervals_checked: u32,
    pub failures: Vec<Interval>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_meters: u32,
    pub m_aggregators: u32,
    pub scheme: ShareScheme,
    pub modulus: u64,
    pub seed: u64,
    pub period: BillingPeriod,
    pub aggregators: Vec<LedgerSnapshot>,
    pub supplier_totals: Vec<IntervalValue>,
    pub bills: BTreeMap<MeterId, u64>,
    pub plaintext_period_totals: BTreeMap<MeterId, u64>,
    pub bills_match_plaintext: bool,
    pub conservation: ConservationCheck,
}

/// A full DTBAS instance: one ledger per aggregator plus the supplier.
#[derive(Debug, Clone)]
pub struct Deployment {
    config: SimConfig,
    ledgers: Vec<AggregatorLedger>,
    supplier: SupplierState,
}

impl Deployment {
    pub fn new(config: &SimConfig) -> Self {
        Deployment {
            config: config.clone(),
            ledgers: config
                .aggregators()
                .map(|id| AggregatorLedger::new(id, config))
                .collect(),
            supplier: SupplierState::new(config),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn ledgers(&self) -> &[AggregatorLedger] {
        &self.ledgers
    }

    pub fn supplier(&self) -> &SupplierState {
        &self.supplier
    }

    /// A meter splits its reading and sends one share to every aggregator.
    /// The split stream is derived from the run seed, meter and interval.
    pub fn submit(&mut self, reading: &Reading) -> Result<()> {
        self.config.check_reading(reading)?;
        let mut stream = rng::share_stream(self.config.seed(), reading.meter.0, reading.interval.0);
        let shares = sharing::split(reading, &self.config, &mut stream)?;
        for (ledger, share) in self.ledgers.iter_mut().zip(shares.shares) {
            ledger.ingest_share(reading.meter, reading.interval, share)?;
        }
        Ok(())
    }

    /// Submits every meter's profile for intervals `0..len`. Profiles are
    /// indexed by meter.
    pub fn submit_profiles(&mut self, profiles: &[LoadProfile], len: u32) -> Result<()> {
        if profiles.len() != self.config.n_meters() as usize {
            return Err(Error::Domain(format!(
                "{} profiles for {} meters",
                profiles.len(),
                self.config.n_meters()
            )));
        }
        for (i, profile) in profiles.iter().enumerate() {
            if profile.len() < len as usize {
                return Err(Error::Domain(format!(
                    "profile for {} has {} intervals, need {len}",
                    MeterId(i as u32),
                    profile.len()
                )));
            }
            for (t, &energy) in profile.values().iter().take(len as usize).enumerate() {
                self.submit(&Reading::new(MeterId(i as u32), Interval(t as u32), energy))?;
            }
        }
        Ok(())
    }

    /// Forwards the column sums for `interval` to the supplier.
    pub fn close_interval(&mut self, interval: Interval) -> Result<u64> {
        let sums = self
            .ledgers
            .iter()
            .map(|l| Ok((l.id(), l.interval_column_sum(interval)?)))
            .collect::<Result<Vec<_>>>()?;
        self.supplier.supplier_collect(interval, &sums)
    }

    pub fn bill(&mut self, period: &BillingPeriod) -> Result<BTreeMap<MeterId, u64>> {
        let reveals = self
            .ledgers
            .iter()
            .map(|l| l.reveal_period(period))
            .collect::<Result<Vec<_>>>()?;
        self.supplier.compute_bill(period, &reveals)
    }
}

/// Runs one billing period end to end and checks the result against the
/// plaintext readings.
pub fn simulate(config: &SimConfig, profiles: &[LoadProfile]) -> Result<SimulationReport> {
    let period = BillingPeriod::new(Interval(0), config.intervals_per_period());
    let mut deployment = Deployment::new(config);
    deployment.submit_profiles(profiles, period.len)?;
    let modulus = config.modulus();

    let mut failures = Vec::new();
    for t in period.intervals() {
        let total = deployment.close_interval(t)?;
        let plain = modulus.sum(profiles.iter().map(|p| p.values()[t.0 as usize]));
        if total != plain {
            failures.push(t);
        }
    }
    let bills = deployment.bill(&period)?;
    let plaintext_period_totals: BTreeMap<MeterId, u64> = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                MeterId(i as u32),
                modulus.sum(p.values()[..period.len as usize].iter().copied()),
            )
        })
        .collect();

    Ok(SimulationReport {
        n_meters: config.n_meters(),
        m_aggregators: config.m_aggregators(),
        scheme: config.scheme(),
        modulus: modulus.get(),
        seed: config.seed(),
        period,
        aggregators: deployment
            .ledgers()
            .iter()
            .map(|l| LedgerSnapshot {
                aggregator: l.id(),
                column_sums: l
                    .column_sums()
                    .iter()
                    .map(|(&interval, &value)| IntervalValue { interval, value })
                    .collect(),
            })
            .collect(),
        supplier_totals: deployment
            .supplier()
            .interval_totals()
            .iter()
            .map(|(&interval, &value)| IntervalValue { interval, value })
            .collect(),
        bills_match_plaintext: bills == plaintext_period_totals,
        bills,
        plaintext_period_totals,
        conservation: ConservationCheck {
            intervals_checked: period.len,
            passed: failures.is_empty(),
            failures,
        },
    })
}
