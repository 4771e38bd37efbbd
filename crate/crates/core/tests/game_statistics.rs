use dtbas_core::game::{
    run_game, three_sigma, Background, Distinguisher, GameSetup, Observable, ProfileChoice,
    Strategy,
};
use dtbas_core::loadgen::{LoadProfile, ProfileGenSpec};
use dtbas_core::{ShareScheme, SimConfig};

fn config(n: u32, scheme: ShareScheme, seed: u64) -> SimConfig {
    SimConfig::builder(n, 3)
        .scheme(scheme)
        .seed(seed)
        .build()
        .unwrap()
}

#[test]
fn challenge_bit_is_uniform() {
    let mut setup = GameSetup::default_archetypes();
    setup.trials = 4_000;
    setup.round_len = 8;
    setup.record_trials = true;
    let d = Distinguisher::new(Strategy::RandomGuess, Observable::SingleAggregator).unwrap();
    let t = run_game(&d, &setup, &config(5, ShareScheme::AdditiveRandom, 21)).unwrap();
    let records = t.per_trial.as_ref().unwrap();
    assert_eq!(records.len(), 4_000);
    let second = records
        .iter()
        .filter(|r| r.challenge == ProfileChoice::Second)
        .count();
    assert_eq!(second as u32, t.second_chosen);
    assert!(
        (second as f64 / 4_000.0 - 0.5).abs() <= three_sigma(4_000),
        "{second}"
    );
    assert!(t.advantage <= three_sigma(4_000));
}

/// Profiles differing by `gap` in two intervals against backgrounds whose
/// per-interval deviation is ten times that gap.
#[test]
fn total_sum_matcher_is_weak_against_noisy_backgrounds() {
    let gap = 50u64;
    let len = 96;
    let lf1 = LoadProfile::new(vec![500; len]);
    let mut v = vec![500; len];
    v[20] += gap;
    v[70] += gap;
    let lf2 = LoadProfile::new(v);
    let setup = GameSetup {
        lf1,
        lf2,
        background: Background::Generator(ProfileGenSpec::flat(5_000, 10.0 * gap as f64, len)),
        trials: 5_000,
        round_len: len as u32,
        record_trials: false,
    };
    let d = Distinguisher::new(Strategy::TotalSumMatcher, Observable::SupplierTotals).unwrap();
    let t = run_game(&d, &setup, &config(10, ShareScheme::AdditiveRandom, 22)).unwrap();
    assert!(
        t.background_std >= 10.0 * gap as f64 * 0.95,
        "{}",
        t.background_std
    );
    assert!(t.success_rate <= 0.6, "success {}", t.success_rate);
}

#[test]
fn total_sum_advantage_shrinks_with_more_meters() {
    let mut setup = GameSetup::default_archetypes();
    setup.trials = 1_500;
    setup.round_len = 24;
    setup.lf1 = LoadProfile::new(vec![300; 24]);
    let mut v = vec![300; 24];
    v[10] = 700;
    setup.lf2 = LoadProfile::new(v);
    let d = Distinguisher::new(Strategy::TotalSumMatcher, Observable::SupplierTotals).unwrap();
    let adv: Vec<f64> = [3, 10, 50]
        .iter()
        .map(|&n| {
            run_game(&d, &setup, &config(n, ShareScheme::AdditiveRandom, 23))
                .unwrap()
                .advantage
        })
        .collect();
    // difference of two independent binomial proportions, 3 sigma
    let tol = 3.0 * (2.0 * 0.25 / setup.trials as f64).sqrt();
    assert!(adv[1] <= adv[0] + tol, "{adv:?}");
    assert!(adv[2] <= adv[1] + tol, "{adv:?}");
    assert!(adv[2] < adv[0], "{adv:?}");
}

#[test]
fn scheme_separation_at_full_trial_count() {
    let setup = GameSetup::default_archetypes();
    let d = Distinguisher::new(Strategy::ColumnSumMatcher, Observable::SingleAggregator).unwrap();
    let naive = run_game(&d, &setup, &config(10, ShareScheme::NaiveEqualSplit, 24)).unwrap();
    let additive = run_game(&d, &setup, &config(10, ShareScheme::AdditiveRandom, 24)).unwrap();
    assert_eq!(naive.trials, 5_000);
    assert!(naive.advantage >= 0.49, "{}", naive.advantage);
    assert!(additive.advantage <= 0.0212, "{}", additive.advantage);
}
