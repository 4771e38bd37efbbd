//! The load-profile distinguishing game.
//!
//! Each trial: the adversary has fixed two profiles `lf_1`, `lf_2`. The
//! challenger flips a fair coin, installs the chosen profile at a random meter
//! position among `n - 1` freshly drawn background profiles (hidden from the
//! adversary), runs the full split/aggregate pipeline for one round, and hands
//! the adversary only its observable. The adversary guesses which profile was
//! installed. Advantage is `|success_rate - 1/2|`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{estimate_reading, observe_deployment, AttackerModel, AttackerView};
use crate::aggregation::Deployment;
use crate::error::{Error, Result};
use crate::loadgen::{generate_profile, Archetype, LoadProfile, ProfileGenSpec};
use crate::model::{AggregatorId, Interval, MeterId, SimConfig, INTERVALS_PER_DAY};
use crate::ring::Modulus;
use crate::rng;
use crate::sharing::ShareScheme;

/// Trial count used when none is given.
pub const DEFAULT_TRIALS: u32 = 5000;
pub const DEFAULT_ROUND_LEN: u32 = INTERVALS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    RandomGuess,
    ColumnSumMatcher,
    TotalSumMatcher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    /// Everything one compromised aggregator holds (active attacker).
    SingleAggregator,
    /// Everything every aggregator holds (passive attacker).
    AllAggregators,
    /// The supplier's per-interval totals.
    SupplierTotals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileChoice {
    #[serde(rename = "lf1")]
    First,
    #[serde(rename = "lf2")]
    Second,
}

impl ProfileChoice {
    fn from_bit(bit: bool) -> Self {
        if bit {
            ProfileChoice::Second
        } else {
            ProfileChoice::First
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distinguisher {
    pub strategy: Strategy,
    pub observable: Observable,
    /// Aggregator read under `SingleAggregator`.
    pub compromised: AggregatorId,
}

impl Distinguisher {
    pub fn new(strategy: Strategy, observable: Observable) -> Result<Self> {
        let ok = match strategy {
            Strategy::RandomGuess => true,
            Strategy::ColumnSumMatcher => observable != Observable::SupplierTotals,
            Strategy::TotalSumMatcher => observable == Observable::SupplierTotals,
        };
        if !ok {
            return Err(Error::Domain(format!(
                "strategy {strategy:?} cannot use observable {observable:?}"
            )));
        }
        Ok(Distinguisher {
            strategy,
            observable,
            compromised: AggregatorId(0),
        })
    }

    pub fn reading(mut self, aggregator: AggregatorId) -> Self {
        self.compromised = aggregator;
        self
    }

    fn attacker_model(&self, m: u32) -> Result<Option<AttackerModel>> {
        Ok(match self.observable {
            Observable::SingleAggregator => Some(AttackerModel::active([self.compromised])?),
            Observable::AllAggregators => Some(AttackerModel::passive(m)),
            Observable::SupplierTotals => None,
        })
    }
}

/// Where the challenger draws the `n - 1` hidden background profiles from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    /// Uniform draws, with replacement, from a fixed pool.
    Pool(Vec<LoadProfile>),
    /// Fresh draws from a generator.
    Generator(ProfileGenSpec),
    /// All-zero backgrounds (degenerate test mode).
    Zero,
}

impl Background {
    /// `bound` caps generated values (the per-reading ring bound).
    fn draw<R: Rng + ?Sized>(&self, len: usize, bound: u64, rng: &mut R) -> Result<LoadProfile> {
        match self {
            Background::Pool(pool) => Ok(pool[rng.random_range(0..pool.len())].clone()),
            Background::Generator(spec) => generate_profile(
                &ProfileGenSpec {
                    length: len,
                    ceiling: spec.ceiling.min(bound),
                    ..spec.clone()
                },
                rng,
            ),
            Background::Zero => Ok(LoadProfile::zeros(len)),
        }
    }

    /// Per-interval expected value of one background profile.
    fn mean(&self, len: usize) -> Vec<f64> {
        match self {
            Background::Pool(pool) => (0..len)
                .map(|t| pool.iter().map(|p| p.values()[t] as f64).sum::<f64>() / pool.len() as f64)
                .collect(),
            Background::Generator(spec) => (0..len).map(|t| spec.shape(t)).collect(),
            Background::Zero => vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSetup {
    pub lf1: LoadProfile,
    pub lf2: LoadProfile,
    pub background: Background,
    pub trials: u32,
    pub round_len: u32,
    pub record_trials: bool,
}

impl GameSetup {
    /// Flat versus meal-time-peaky household, diurnal noisy backgrounds,
    /// 5000 one-day rounds.
    pub fn default_archetypes() -> Self {
        let len = DEFAULT_ROUND_LEN as usize;
        let lf1 = generate_profile(&ProfileGenSpec::flat(200, 0.0, len), &mut rng::stream(0))
            .expect("valid spec");
        let lf2 = generate_profile(
            &ProfileGenSpec::new(Archetype::Peaky, 200, 1500, 0.0, len),
            &mut rng::stream(0),
        )
        .expect("valid spec");
        GameSetup {
            lf1,
            lf2,
            background: Background::Generator(ProfileGenSpec::new(
                Archetype::Diurnal,
                100,
                800,
                60.0,
                len,
            )),
            trials: DEFAULT_TRIALS,
            round_len: DEFAULT_ROUND_LEN,
            record_trials: false,
        }
    }

    fn validate(&self, config: &SimConfig) -> Result<()> {
        if config.n_meters() <= 2 {
            return Err(Error::Domain(format!(
                "game needs n > 2 meters (got {})",
                config.n_meters()
            )));
        }
        if self.trials == 0 {
            return Err(Error::Domain("game needs at least one trial".into()));
        }
        if self.round_len == 0 {
            return Err(Error::Domain("round length must be positive".into()));
        }
        let len = self.round_len as usize;
        let bound = config.energy_bound();
        for (name, p) in [("lf1", &self.lf1), ("lf2", &self.lf2)] {
            if p.len() < len {
                return Err(Error::Domain(format!(
                    "{name} has {} intervals, round needs {len}",
                    p.len()
                )));
            }
            p.check_bound(bound)?;
        }
        match &self.background {
            Background::Pool(pool) if pool.is_empty() => {
                return Err(Error::Domain(
                    "empty background pool and no generator".into(),
                ))
            }
            Background::Pool(pool) => {
                for p in pool {
                    if p.len() < len {
                        return Err(Error::Domain(format!(
                            "background profile shorter than round ({} < {len})",
                            p.len()
                        )));
                    }
                    p.check_bound(bound)?;
                }
            }
            Background::Generator(spec) => ProfileGenSpec {
                length: len,
                ceiling: spec.ceiling.min(bound),
                ..spec.clone()
            }
            .validate()?,
            Background::Zero => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub challenge: ProfileChoice,
    pub guess: ProfileChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub strategy: Strategy,
    pub observable: Observable,
    pub scheme: ShareScheme,
    pub n_meters: u32,
    pub m_aggregators: u32,
    pub round_len: u32,
    pub seed: u64,
    pub trials: u32,
    pub wins: u32,
    pub success_rate: f64,
    pub advantage: f64,
    /// How often `lf_2` was the challenge.
    pub second_chosen: u32,
    /// Largest per-interval gap `|lf_1 - lf_2|`.
    pub challenge_gap: u64,
    /// RMS deviation of the background sum from the adversary's prior mean,
    /// per interval, over all trials.
    pub background_std: f64,
    pub per_trial: Option<Vec<TrialRecord>>,
}

/// Guess from the shares visible to the compromised aggregator(s).
///
/// A meter row whose visible shares are consistent with `lf_c` at every
/// interval identifies `lf_c`. When neither or both profiles match, falls back
/// to comparing the visible column totals with the share of each profile's
/// total an aggregator would carry.
pub fn column_sum_matcher_guess(
    view: &AttackerView,
    n_meters: u32,
    lf1: &LoadProfile,
    lf2: &LoadProfile,
    scheme: ShareScheme,
    modulus: Modulus,
    m_aggregators: u32,
) -> Result<ProfileChoice> {
    let intervals: Vec<Interval> = view.intervals().into_iter().collect();
    let row_matches = |lf: &LoadProfile| -> Result<bool> {
        for meter in (0..n_meters).map(MeterId) {
            let mut all = true;
            for &t in &intervals {
                let est = estimate_reading(view, meter, t, scheme)?;
                if est.point_estimate.is_none() || !est.admits(lf.values()[t.0 as usize]) {
                    all = false;
                    break;
                }
            }
            if all {
                return Ok(true);
            }
        }
        Ok(false)
    };
    match (row_matches(lf1)?, row_matches(lf2)?) {
        (true, false) => return Ok(ProfileChoice::First),
        (false, true) => return Ok(ProfileChoice::Second),
        _ => {}
    }
    let observed: i128 =
        modulus.centered(modulus.sum(view.visible_column_sums().values().copied()));
    let seen = view.model().compromised().len() as i128;
    let expected = |lf: &LoadProfile| -> i128 {
        let total: i128 = intervals
            .iter()
            .map(|t| lf.values()[t.0 as usize] as i128)
            .sum();
        total * seen / m_aggregators as i128
    };
    let d1 = (observed - expected(lf1)).abs();
    let d2 = (observed - expected(lf2)).abs();
    Ok(if d2 < d1 {
        ProfileChoice::Second
    } else {
        ProfileChoice::First
    })
}

/// Guess from supplier totals: the profile whose removal leaves a residual
/// closest (in squared distance) to the expected background sum.
pub fn total_sum_matcher_guess(
    totals: &[u64],
    lf1: &LoadProfile,
    lf2: &LoadProfile,
    background_prior: &[f64],
    modulus: Modulus,
) -> ProfileChoice {
    let distance = |lf: &LoadProfile| -> f64 {
        totals
            .iter()
            .zip(lf.values())
            .zip(background_prior)
            .map(|((&total, &v), &prior)| {
                let r = modulus.centered(total) as f64 - v as f64 - prior;
                r * r
            })
            .sum()
    };
    if distance(lf2) < distance(lf1) {
        ProfileChoice::Second
    } else {
        ProfileChoice::First
    }
}

/// Acceptance band for a game outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    /// Advantage within three binomial standard deviations of zero.
    NoAdvantage { max_advantage: f64 },
    /// The observable identifies the challenge almost always.
    Leak { min_success: f64 },
}

impl Band {
    pub fn contains(&self, transcript: &GameTranscript) -> bool {
        match *self {
            Band::NoAdvantage { max_advantage } => transcript.advantage <= max_advantage,
            Band::Leak { min_success } => transcript.success_rate >= min_success,
        }
    }
}

/// `3 * sqrt(0.25 / trials)`: three standard deviations of a fair-coin success rate.
pub fn three_sigma(trials: u32) -> f64 {
    3.0 * (0.25 / trials as f64).sqrt()
}

/// The band an outcome must fall in, where one is known. Supplier-total
/// matching depends on background variance and has none.
pub fn expected_band(
    distinguisher: &Distinguisher,
    scheme: ShareScheme,
    trials: u32,
) -> Option<Band> {
    let fair = Band::NoAdvantage {
        max_advantage: three_sigma(trials),
    };
    let leak = Band::Leak { min_success: 0.99 };
    match (distinguisher.strategy, distinguisher.observable, scheme) {
        (Strategy::RandomGuess, _, _) => Some(fair),
        (Strategy::ColumnSumMatcher, Observable::SingleAggregator, ShareScheme::AdditiveRandom) => {
            Some(fair)
        }
        (
            Strategy::ColumnSumMatcher,
            Observable::SingleAggregator,
            ShareScheme::NaiveEqualSplit,
        ) => Some(leak),
        (Strategy::ColumnSumMatcher, Observable::AllAggregators, _) => Some(leak),
        _ => None,
    }
}

struct TrialOutcome {
    challenge: ProfileChoice,
    guess: ProfileChoice,
    background_sq: f64,
}

fn run_trial(
    trial: u32,
    distinguisher: &Distinguisher,
    setup: &GameSetup,
    config: &SimConfig,
    seed: u64,
    prior: &[f64],
) -> Result<TrialOutcome> {
    let mut stream = rng::labeled_stream(seed, "game-trial", trial as u64);
    let n = config.n_meters();
    let len = setup.round_len as usize;
    let challenge = ProfileChoice::from_bit(stream.random());
    let position = stream.random_range(0..n) as usize;
    let installed = match challenge {
        ProfileChoice::First => &setup.lf1,
        ProfileChoice::Second => &setup.lf2,
    };
    let mut profiles = Vec::with_capacity(n as usize);
    let mut background_sum = vec![0u64; len];
    for i in 0..n as usize {
        if i == position {
            profiles.push(LoadProfile::new(installed.values()[..len].to_vec()));
        } else {
            let bg = setup
                .background
                .draw(len, config.energy_bound(), &mut stream)?;
            for (acc, &v) in background_sum.iter_mut().zip(bg.values()) {
                *acc += v;
            }
            profiles.push(bg);
        }
    }
    let background_sq = background_sum
        .iter()
        .zip(prior)
        .map(|(&s, &p)| (s as f64 - p).powi(2))
        .sum();

    let round = SimConfig::builder(n, config.m_aggregators())
        .scheme(config.scheme())
        .modulus(config.modulus())
        .seed(stream.random())
        .intervals_per_period(setup.round_len)
        .table_reproduction(config.table_reproduction())
        .build()?;
    let mut deployment = Deployment::new(&round);
    deployment.submit_profiles(&profiles, setup.round_len)?;

    let guess = match distinguisher.strategy {
        Strategy::RandomGuess => ProfileChoice::from_bit(stream.random()),
        Strategy::ColumnSumMatcher => {
            let model = distinguisher
                .attacker_model(round.m_aggregators())?
                .expect("column matcher reads aggregators");
            let view = observe_deployment(&model, &deployment)?;
            column_sum_matcher_guess(
                &view,
                n,
                &setup.lf1,
                &setup.lf2,
                round.scheme(),
                round.modulus(),
                round.m_aggregators(),
            )?
        }
        Strategy::TotalSumMatcher => {
            let totals = Interval(0)
                .span(setup.round_len)
                .map(|t| deployment.close_interval(t))
                .collect::<Result<Vec<_>>>()?;
            total_sum_matcher_guess(&totals, &setup.lf1, &setup.lf2, prior, round.modulus())
        }
    };
    Ok(TrialOutcome {
        challenge,
        guess,
        background_sq,
    })
}

/// Plays `setup.trials` independent rounds. Trials run in parallel; trial `i`
/// draws all its randomness from a stream derived from `(seed, i)`, so the
/// transcript depends only on the inputs.
pub fn run_game(
    distinguisher: &Distinguisher,
    setup: &GameSetup,
    config: &SimConfig,
) -> Result<GameTranscript> {
    setup.validate(config)?;
    let seed = config.seed();
    let len = setup.round_len as usize;
    let n = config.n_meters();
    let prior: Vec<f64> = setup
        .background
        .mean(len)
        .into_iter()
        .map(|mu| mu * (n - 1) as f64)
        .collect();

    let outcomes = (0..setup.trials)
        .into_par_iter()
        .map(|trial| run_trial(trial, distinguisher, setup, config, seed, &prior))
        .collect::<Result<Vec<_>>>()?;

    let wins = outcomes.iter().filter(|o| o.challenge == o.guess).count() as u32;
    let second_chosen = outcomes
        .iter()
        .filter(|o| o.challenge == ProfileChoice::Second)
        .count() as u32;
    let background_sq: f64 = outcomes.iter().map(|o| o.background_sq).sum();
    let success_rate = wins as f64 / setup.trials as f64;
    let challenge_gap = setup.lf1.values()[..len]
        .iter()
        .zip(&setup.lf2.values()[..len])
        .map(|(a, b)| a.abs_diff(*b))
        .max()
        .unwrap_or(0);
    let per_trial = setup.record_trials.then(|| {
        outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| TrialRecord {
                trial: i as u32,
                challenge: o.challenge,
                guess: o.guess,
            })
            .collect()
    });
    Ok(GameTranscript {
        strategy: distinguisher.strategy,
        observable: distinguisher.observable,
        scheme: config.scheme(),
        n_meters: n,
        m_aggregators: config.m_aggregators(),
        round_len: setup.round_len,
        seed,
        trials: setup.trials,
        wins,
        success_rate,
        advantage: (success_rate - 0.5).abs(),
        second_chosen,
        challenge_gap,
        background_std: (background_sq / (setup.trials as f64 * len as f64)).sqrt(),
        per_trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: u32, scheme: ShareScheme, seed: u64) -> SimConfig {
        SimConfig::builder(n, 3)
            .scheme(scheme)
            .seed(seed)
            .build()
            .unwrap()
    }

    fn small_setup(trials: u32) -> GameSetup {
        let mut s = GameSetup::default_archetypes();
        s.lf1 = LoadProfile::new(vec![200; 8]);
        s.lf2 = LoadProfile::new(vec![200, 1500, 200, 200, 200, 1500, 200, 200]);
        s.trials = trials;
        s.round_len = 8;
        s.background =
            Background::Generator(ProfileGenSpec::new(Archetype::Diurnal, 100, 800, 60.0, 8));
        s
    }

    #[test]
    fn inconsistent_distinguisher_rejected() {
        assert!(
            Distinguisher::new(Strategy::ColumnSumMatcher, Observable::SupplierTotals).is_err()
        );
        assert!(
            Distinguisher::new(Strategy::TotalSumMatcher, Observable::SingleAggregator).is_err()
        );
        assert!(Distinguisher::new(Strategy::RandomGuess, Observable::AllAggregators).is_ok());
    }

    #[test]
    fn setup_errors() {
        let d = Distinguisher::new(Strategy::RandomGuess, Observable::SingleAggregator).unwrap();
        let mut s = small_setup(10);
        s.background = Background::Pool(vec![]);
        assert!(matches!(
            run_game(&d, &s, &config(3, ShareScheme::AdditiveRandom, 0)),
            Err(Error::Domain(_))
        ));
        let s = small_setup(0);
        assert!(run_game(&d, &s, &config(3, ShareScheme::AdditiveRandom, 0)).is_err());
        let two = SimConfig::builder(2, 3)
            .table_reproduction(true)
            .build()
            .unwrap();
        assert!(matches!(
            run_game(&d, &small_setup(10), &two),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exact_row_match_guesses_first() {
        let c = SimConfig::builder(3, 3)
            .scheme(ShareScheme::NaiveEqualSplit)
            .intervals_per_period(4)
            .build()
            .unwrap();
        let lf1 = LoadProfile::new(vec![30, 60, 90, 120]);
        let lf2 = LoadProfile::new(vec![900, 600, 300, 3]);
        let mut d = Deployment::new(&c);
        d.submit_profiles(
            &[
                LoadProfile::new(vec![5, 5, 5, 5]),
                lf1.clone(),
                LoadProfile::new(vec![7, 8, 9, 10]),
            ],
            4,
        )
        .unwrap();
        let view =
            observe_deployment(&AttackerModel::active([AggregatorId(1)]).unwrap(), &d).unwrap();
        let g = column_sum_matcher_guess(
            &view,
            3,
            &lf1,
            &lf2,
            ShareScheme::NaiveEqualSplit,
            c.modulus(),
            3,
        )
        .unwrap();
        assert_eq!(g, ProfileChoice::First);
    }

    #[test]
    fn zero_background_total_matcher_is_exact() {
        let d = Distinguisher::new(Strategy::TotalSumMatcher, Observable::SupplierTotals).unwrap();
        let mut s = small_setup(200);
        s.background = Background::Zero;
        let t = run_game(&d, &s, &config(4, ShareScheme::AdditiveRandom, 1)).unwrap();
        assert_eq!(t.wins, 200);
        assert_eq!(t.success_rate, 1.0);
        assert_eq!(t.background_std, 0.0);
    }

    #[test]
    fn identical_challenge_is_coin_flip() {
        // with lf1 = lf2 every guess is a fixed function of data independent of b
        let mut s = small_setup(2000);
        s.lf2 = s.lf1.clone();
        s.background = Background::Zero;
        for (strategy, obs) in [
            (Strategy::TotalSumMatcher, Observable::SupplierTotals),
            (Strategy::ColumnSumMatcher, Observable::SingleAggregator),
        ] {
            let d = Distinguisher::new(strategy, obs).unwrap();
            let t = run_game(&d, &s, &config(3, ShareScheme::NaiveEqualSplit, 3)).unwrap();
            // 3 sigma of Binomial(2000, 1/2) is 0.0335
            assert!(t.advantage <= 0.0336, "{strategy:?}: {}", t.success_rate);
        }
    }

    #[test]
    fn transcript_is_reproducible() {
        let d =
            Distinguisher::new(Strategy::ColumnSumMatcher, Observable::SingleAggregator).unwrap();
        let mut s = small_setup(64);
        s.record_trials = true;
        let c = config(4, ShareScheme::AdditiveRandom, 77);
        let a = run_game(&d, &s, &c).unwrap();
        let b = run_game(&d, &s, &c).unwrap();
        assert_eq!(a, b);
        let recs = a.per_trial.as_ref().unwrap();
        assert_eq!(recs.len(), 64);
        assert_eq!(
            recs.iter().filter(|r| r.challenge == r.guess).count() as u32,
            a.wins
        );
        assert!(a.wins <= a.trials);
        assert_eq!(a.success_rate, a.wins as f64 / a.trials as f64);
        let other = run_game(&d, &s, &c.reseeded(78)).unwrap();
        assert_ne!(a.per_trial, other.per_trial);
    }

    #[test]
    fn naive_single_aggregator_leaks() {
        let d =
            Distinguisher::new(Strategy::ColumnSumMatcher, Observable::SingleAggregator).unwrap();
        let t = run_game(
            &d,
            &small_setup(300),
            &config(5, ShareScheme::NaiveEqualSplit, 4),
        )
        .unwrap();
        assert!(t.success_rate >= 0.99, "{}", t.success_rate);
    }

    #[test]
    fn passive_observer_identifies_under_both_schemes() {
        let d = Distinguisher::new(Strategy::ColumnSumMatcher, Observable::AllAggregators).unwrap();
        for scheme in [ShareScheme::NaiveEqualSplit, ShareScheme::AdditiveRandom] {
            let t = run_game(&d, &small_setup(200), &config(4, scheme, 8)).unwrap();
            assert_eq!(t.success_rate, 1.0, "{scheme:?}");
        }
    }
}
