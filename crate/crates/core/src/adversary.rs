//! Attacker models over the aggregation state.
//!
//! An active attacker controls one or two aggregators and sees exactly what
//! they received. A passive attacker observes every aggregator; the cost of
//! breaking transport encryption to do so is carried only as a delay
//! annotation in reports. Meters are honest: nothing here can change what a
//! meter sends.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregatorLedger, Deployment};
use crate::error::{Error, Result};
use crate::loadgen::LoadProfile;
use crate::metrics::{AnonymityReport, ProbabilityProfile, Subject};
use crate::model::{AggregatorId, Interval, MeterId, SimConfig};
use crate::ring::Modulus;
use crate::sharing::ShareScheme;

pub const MAX_ACTIVE_COMPROMISE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Active,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerModel {
    kind: AttackKind,
    compromised: BTreeSet<AggregatorId>,
}

impl AttackerModel {
    /// Controls one or two aggregators.
    pub fn active<I: IntoIterator<Item = AggregatorId>>(compromised: I) -> Result<Self> {
        let model = AttackerModel {
            kind: AttackKind::Active,
            compromised: compromised.into_iter().collect(),
        };
        model.check_kind()?;
        Ok(model)
    }

    /// Observes all `m` aggregators.
    pub fn passive(m_aggregators: u32) -> Self {
        AttackerModel {
            kind: AttackKind::Passive,
            compromised: (0..m_aggregators).map(AggregatorId).collect(),
        }
    }

    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn compromised(&self) -> &BTreeSet<AggregatorId> {
        &self.compromised
    }

    fn check_kind(&self) -> Result<()> {
        if self.kind == AttackKind::Active
            && !(1..=MAX_ACTIVE_COMPROMISE).contains(&self.compromised.len())
        {
            return Err(Error::Domain(format!(
                "active attacker controls 1 to {MAX_ACTIVE_COMPROMISE} aggregators, not {}",
                self.compromised.len()
            )));
        }
        Ok(())
    }

    fn validate(&self, m: u32) -> Result<()> {
        self.check_kind()?;
        if let Some(id) = self.compromised.iter().find(|id| id.0 >= m) {
            return Err(Error::Domain(format!("{id} does not exist (m = {m})")));
        }
        if self.kind == AttackKind::Passive && self.compromised.len() != m as usize {
            return Err(Error::Domain(
                "passive attacker must observe every aggregator".into(),
            ));
        }
        Ok(())
    }
}

/// Snapshot of everything the compromised aggregators hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackerView {
    model: AttackerModel,
    m_aggregators: u32,
    n_meters: u32,
    modulus: Modulus,
    visible_cells: BTreeMap<(AggregatorId, MeterId, Interval), u64>,
    visible_column_sums: BTreeMap<(AggregatorId, Interval), u64>,
}

impl AttackerView {
    pub fn model(&self) -> &AttackerModel {
        &self.model
    }

    pub fn visible_cells(&self) -> &BTreeMap<(AggregatorId, MeterId, Interval), u64> {
        &self.visible_cells
    }

    pub fn visible_column_sums(&self) -> &BTreeMap<(AggregatorId, Interval), u64> {
        &self.visible_column_sums
    }

    pub fn sees_all_aggregators(&self) -> bool {
        self.model.compromised.len() == self.m_aggregators as usize
    }

    pub fn intervals(&self) -> BTreeSet<Interval> {
        self.visible_column_sums.keys().map(|&(_, t)| t).collect()
    }

    /// Visible shares of one (meter, interval) cell, by aggregator.
    pub fn shares_of(&self, meter: MeterId, interval: Interval) -> Vec<(AggregatorId, u64)> {
        self.model
            .compromised
            .iter()
            .filter_map(|&a| {
                self.visible_cells
                    .get(&(a, meter, interval))
                    .map(|&s| (a, s))
            })
            .collect()
    }
}

pub fn observe(model: &AttackerModel, ledgers: &[AggregatorLedger]) -> Result<AttackerView> {
    let m = ledgers.len() as u32;
    model.validate(m)?;
    let first = ledgers
        .first()
        .ok_or_else(|| Error::Domain("no aggregators to observe".into()))?;
    let n_meters = first
        .cells()
        .keys()
        .map(|(meter, _)| meter.0 + 1)
        .max()
        .unwrap_or(0);
    let mut view = AttackerView {
        model: model.clone(),
        m_aggregators: m,
        n_meters,
        modulus: Modulus::default(),
        visible_cells: BTreeMap::new(),
        visible_column_sums: BTreeMap::new(),
    };
    for ledger in ledgers
        .iter()
        .filter(|l| model.compromised.contains(&l.id()))
    {
        let a = ledger.id();
        for (&(meter, t), &share) in ledger.cells() {
            view.visible_cells.insert((a, meter, t), share);
        }
        for (&t, &sum) in ledger.column_sums() {
            view.visible_column_sums.insert((a, t), sum);
        }
    }
    Ok(view)
}

/// Observation of a whole deployment, carrying its modulus and meter count.
pub fn observe_deployment(model: &AttackerModel, deployment: &Deployment) -> Result<AttackerView> {
    let mut view = observe(model, deployment.ledgers())?;
    view.modulus = deployment.config().modulus();
    view.n_meters = deployment.config().n_meters();
    Ok(view)
}

/// What one compromised column yields versus what identifying the target needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eq4Comparison {
    pub aggregator: AggregatorId,
    pub target: MeterId,
    /// Column sum over all meters at the compromised aggregator.
    pub gained: u64,
    /// The target's own total (sum of its shares, i.e. its plaintext).
    pub needed: u64,
    pub equal: bool,
}

/// Compares the compromised aggregator's column total over `intervals` with
/// the target meter's plaintext total over the same intervals. `truth` is the
/// target's ground-truth profile, indexed by interval ordinal.
pub fn gained_vs_needed(
    view: &AttackerView,
    target: MeterId,
    intervals: &[Interval],
    truth: &LoadProfile,
) -> Result<Eq4Comparison> {
    if view.model.compromised.len() != 1 {
        return Err(Error::Domain(format!(
            "gained-vs-needed is defined for one compromised column, view has {}",
            view.model.compromised.len()
        )));
    }
    let aggregator = *view
        .model
        .compromised
        .iter()
        .next()
        .expect("one aggregator");
    let modulus = view.modulus;
    let mut gained = 0u64;
    let mut needed = 0u64;
    for &t in intervals {
        let col = view
            .visible_column_sums
            .get(&(aggregator, t))
            .ok_or_else(|| Error::Domain(format!("{aggregator} holds nothing for {t}")))?;
        let value = truth
            .values()
            .get(t.0 as usize)
            .ok_or_else(|| Error::Domain(format!("ground truth for {target} lacks {t}")))?;
        gained = modulus.add(gained, *col);
        needed = modulus.add(needed, *value);
    }
    Ok(Eq4Comparison {
        aggregator,
        target,
        gained,
        needed,
        equal: gained == needed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingEstimate {
    /// `None` when the view carries no information about the reading.
    pub point_estimate: Option<u64>,
    /// The reading is determined, up to the scheme's split rounding.
    pub exact: bool,
    /// Inclusive range of readings consistent with the view.
    pub lower: Option<u64>,
    pub upper: Option<u64>,
}

impl ReadingEstimate {
    fn unknown() -> Self {
        ReadingEstimate {
            point_estimate: None,
            exact: false,
            lower: None,
            upper: None,
        }
    }

    fn range(point: u64, lower: u64, upper: u64) -> Self {
        ReadingEstimate {
            point_estimate: Some(point),
            exact: true,
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fn admits(&self, energy: u64) -> bool {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => (lo..=hi).contains(&energy),
            _ => true,
        }
    }
}

pub fn estimate_reading(
    view: &AttackerView,
    target: MeterId,
    interval: Interval,
    scheme: ShareScheme,
) -> Result<ReadingEstimate> {
    let shares = view.shares_of(target, interval);
    if shares.is_empty() {
        return Err(Error::Domain(format!(
            "no compromised aggregator holds {target} at {interval}"
        )));
    }
    let m = view.m_aggregators as u64;
    if shares.len() as u64 == m {
        let e = view.modulus.sum(shares.iter().map(|&(_, s)| s));
        return Ok(ReadingEstimate::range(e, e, e));
    }
    match scheme {
        ShareScheme::AdditiveRandom => Ok(ReadingEstimate::unknown()),
        ShareScheme::NaiveEqualSplit => {
            // e = m*q + r with 0 <= r < m; share 0 is q + r, every other share is q.
            let first = shares.iter().find(|(a, _)| a.0 == 0).map(|&(_, s)| s);
            let other = shares.iter().find(|(a, _)| a.0 != 0).map(|&(_, s)| s);
            Ok(match (first, other) {
                (Some(s0), Some(q)) => {
                    let e = m * q + s0.saturating_sub(q);
                    ReadingEstimate::range(e, e, e)
                }
                (None, Some(q)) => ReadingEstimate::range(m * q, m * q, m * q + m - 1),
                (Some(s0), None) => {
                    let r_max = (m - 1).min(s0);
                    ReadingEstimate::range(m * s0, m * s0 - (m - 1) * r_max, m * s0)
                }
                (None, None) => unreachable!("shares is non-empty"),
            })
        }
    }
}

/// The attacker's belief about which of the `n` meters produced `probe` (a
/// consumption series over intervals `0..probe.len()`). Each meter whose
/// visible shares are consistent with the probe at every interval gets equal
/// weight. When the view rules nobody out the profile is uniform, `1/n`.
pub fn assign_user_probabilities(
    view: &AttackerView,
    n: u32,
    scheme: ShareScheme,
    probe: &LoadProfile,
) -> Result<ProbabilityProfile> {
    if n <= 2 {
        return Err(Error::Domain(format!(
            "attribution needs more than two users (got {n})"
        )));
    }
    let mut candidates = Vec::new();
    for meter in (0..n).map(MeterId) {
        let mut consistent = true;
        for (t, &value) in probe.values().iter().enumerate() {
            let interval = Interval(t as u32);
            if view.shares_of(meter, interval).is_empty() {
                continue;
            }
            if !estimate_reading(view, meter, interval, scheme)?.admits(value) {
                consistent = false;
                break;
            }
        }
        candidates.push(consistent);
    }
    let hits = candidates.iter().filter(|&&c| c).count();
    if hits == 0 {
        return ProbabilityProfile::uniform(n as usize, Subject::OverUsers);
    }
    let p = candidates
        .iter()
        .map(|&c| if c { 1.0 / hits as f64 } else { 0.0 })
        .collect();
    ProbabilityProfile::new(p, Subject::OverUsers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterEstimateSummary {
    pub meter: MeterId,
    pub intervals: u32,
    pub exact: u32,
    pub unknown: u32,
    /// Largest |point estimate - reading| over exact intervals.
    pub max_abs_error: Option<u64>,
    pub first_interval: ReadingEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub compromised: Vec<AggregatorId>,
    pub scheme: ShareScheme,
    pub n_meters: u32,
    pub m_aggregators: u32,
    pub intervals: u32,
    pub seed: u64,
    pub target: MeterId,
    pub visible_fraction: f64,
    /// Present only for a single compromised aggregator.
    pub gained_vs_needed: Option<Eq4Comparison>,
    pub estimates: Vec<MeterEstimateSummary>,
    pub full_reconstruction: bool,
    pub user_profile: ProbabilityProfile,
    pub anonymity: AnonymityReport,
    /// Time a passive attacker must spend breaking transport encryption
    /// before the full view is usable.
    pub decrypt_delay_hours: Option<f64>,
}

/// Delivers `profiles` through a fresh deployment, then runs the attack
/// pipeline against `target`.
pub fn run_attack(
    config: &SimConfig,
    profiles: &[LoadProfile],
    model: &AttackerModel,
    target: MeterId,
    decrypt_delay_hours: f64,
) -> Result<AttackReport> {
    if target.0 >= config.n_meters() {
        return Err(Error::Domain(format!(
            "target {target} outside 0..{}",
            config.n_meters()
        )));
    }
    let len = config.intervals_per_period();
    let mut deployment = Deployment::new(config);
    deployment.submit_profiles(profiles, len)?;
    let view = observe_deployment(model, &deployment)?;
    let intervals: Vec<Interval> = Interval(0).span(len).collect();
    let scheme = config.scheme();

    let eq4 = if model.compromised().len() == 1 {
        Some(gained_vs_needed(
            &view,
            target,
            &intervals,
            &profiles[target.0 as usize],
        )?)
    } else {
        None
    };

    let mut estimates = Vec::new();
    for (i, profile) in profiles.iter().enumerate() {
        let meter = MeterId(i as u32);
        let mut exact = 0;
        let mut unknown = 0;
        let mut max_abs_error: Option<u64> = None;
        let mut first = None;
        for &t in &intervals {
            let est = estimate_reading(&view, meter, t, scheme)?;
            first.get_or_insert(est);
            match est.point_estimate {
                Some(p) if est.exact => {
                    exact += 1;
                    let err = p.abs_diff(profile.values()[t.0 as usize]);
                    max_abs_error = Some(max_abs_error.map_or(err, |e| e.max(err)));
                }
                _ => unknown += 1,
            }
        }
        estimates.push(MeterEstimateSummary {
            meter,
            intervals: len,
            exact,
            unknown,
            max_abs_error,
            first_interval: first.expect("at least one interval"),
        });
    }

    let probe = LoadProfile::new(profiles[target.0 as usize].values()[..len as usize].to_vec());
    let user_profile = assign_user_probabilities(&view, config.n_meters(), scheme, &probe)?;
    let passive = model.kind() == AttackKind::Passive;
    Ok(AttackReport {
        kind: model.kind(),
        compromised: model.compromised().iter().copied().collect(),
        scheme,
        n_meters: config.n_meters(),
        m_aggregators: config.m_aggregators(),
        intervals: len,
        seed: config.seed(),
        target,
        visible_fraction: view.visible_cells().len() as f64
            / (config.m_aggregators() as f64 * config.n_meters() as f64 * len as f64),
        gained_vs_needed: eq4,
        full_reconstruction: view.sees_all_aggregators(),
        estimates,
        anonymity: AnonymityReport::of(&user_profile),
        user_profile,
        decrypt_delay_hours: passive.then_some(decrypt_delay_hours),
    })
}
