use dtbas_core::adversary::{gained_vs_needed, observe_deployment, AttackerModel};
use dtbas_core::aggregation::{simulate, BillingPeriod, Deployment};
use dtbas_core::loadgen::LoadProfile;
use dtbas_core::rng::{labeled_stream, SimRng};
use dtbas_core::sharing::{reconstruct, split};
use dtbas_core::{AggregatorId, Interval, MeterId, Reading, ShareScheme, SimConfig};
use rand::Rng;

const SCHEMES: [ShareScheme; 2] = [ShareScheme::NaiveEqualSplit, ShareScheme::AdditiveRandom];

fn random_profiles(rng: &mut SimRng, n: u32, len: usize) -> Vec<LoadProfile> {
    (0..n)
        .map(|_| LoadProfile::new((0..len).map(|_| rng.random_range(0..5_000)).collect()))
        .collect()
}

#[test]
fn roundtrip_holds_for_random_energies() {
    let mut rng = labeled_stream(1, "roundtrip", 0);
    for case in 0..10_000u32 {
        let m = rng.random_range(3..8);
        let scheme = SCHEMES[(case % 2) as usize];
        let config = SimConfig::builder(3, m).scheme(scheme).build().unwrap();
        let energy = rng.random_range(0..config.energy_bound());
        let reading = Reading {
            meter: MeterId(0),
            interval: Interval(case),
            energy,
        };
        let shares = split(&reading, &config, &mut rng).unwrap();
        assert_eq!(
            reconstruct(&shares, &config).unwrap(),
            energy,
            "case {case} {scheme}"
        );
    }
}

#[test]
fn column_sums_conserve_plaintext_over_many_runs() {
    let mut rng = labeled_stream(2, "conservation", 0);
    for run in 0..1_000u64 {
        let n = rng.random_range(3..=10);
        let scheme = SCHEMES[(run % 2) as usize];
        let config = SimConfig::builder(n, 3)
            .scheme(scheme)
            .seed(run)
            .intervals_per_period(4)
            .build()
            .unwrap();
        let profiles = random_profiles(&mut rng, n, 4);
        let report = simulate(&config, &profiles).unwrap();
        assert!(
            report.conservation.passed,
            "run {run}: {:?}",
            report.conservation.failures
        );
        for (t, total) in report.supplier_totals.iter().enumerate() {
            let plain: u64 = profiles.iter().map(|p| p.values()[t]).sum();
            assert_eq!(total.value, plain, "run {run} interval {t}");
        }
    }
}

#[test]
fn bills_equal_plaintext_period_totals_over_many_runs() {
    let mut rng = labeled_stream(3, "billing", 0);
    for run in 0..1_000u64 {
        let n = rng.random_range(3..=8);
        let m = rng.random_range(3..=5);
        let len = rng.random_range(1..=6u32);
        let config = SimConfig::builder(n, m)
            .scheme(SCHEMES[(run % 2) as usize])
            .seed(run)
            .intervals_per_period(len)
            .build()
            .unwrap();
        let profiles = random_profiles(&mut rng, n, len as usize);
        let report = simulate(&config, &profiles).unwrap();
        for (i, p) in profiles.iter().enumerate() {
            assert_eq!(
                report.bills[&MeterId(i as u32)] as u128,
                p.total(),
                "run {run} meter {i}"
            );
        }
        assert!(report.bills_match_plaintext);
    }
}

#[test]
fn share_columns_sum_to_aggregator_column() {
    let config = SimConfig::builder(4, 3)
        .seed(11)
        .intervals_per_period(2)
        .build()
        .unwrap();
    let profiles = vec![
        LoadProfile::new(vec![10, 20]),
        LoadProfile::new(vec![0, 7]),
        LoadProfile::new(vec![400, 1]),
        LoadProfile::new(vec![33, 33]),
    ];
    let mut deployment = Deployment::new(&config);
    deployment.submit_profiles(&profiles, 2).unwrap();
    let p = config.modulus();
    for ledger in deployment.ledgers() {
        for t in Interval(0).span(2) {
            let by_cells = p.sum(config.meters().map(|meter| ledger.cells()[&(meter, t)]));
            assert_eq!(by_cells, ledger.interval_column_sum(t).unwrap());
        }
    }
    let totals: Vec<u64> = Interval(0)
        .span(2)
        .map(|t| deployment.close_interval(t).unwrap())
        .collect();
    assert_eq!(totals, vec![443, 61]);
    let bills = deployment
        .bill(&BillingPeriod::new(Interval(0), 2))
        .unwrap();
    assert_eq!(bills[&MeterId(2)], 401);
}

/// The compromised column total almost never equals the target's own total.
#[test]
fn column_sum_rarely_equals_target_total() {
    let mut coincidences = 0;
    let runs = 1_000u64;
    for seed in 0..runs {
        let config = SimConfig::builder(3, 3)
            .seed(seed)
            .intervals_per_period(1)
            .build()
            .unwrap();
        let profiles = vec![
            LoadProfile::new(vec![10]),
            LoadProfile::new(vec![20]),
            LoadProfile::new(vec![30]),
        ];
        let mut deployment = Deployment::new(&config);
        deployment.submit_profiles(&profiles, 1).unwrap();
        let agg = AggregatorId((seed % 3) as u32);
        let view = observe_deployment(&AttackerModel::active([agg]).unwrap(), &deployment).unwrap();
        let cmp = gained_vs_needed(&view, MeterId(0), &[Interval(0)], &profiles[0]).unwrap();
        assert_eq!(cmp.needed, 10);
        if cmp.equal {
            coincidences += 1;
        }
    }
    assert!(
        (coincidences as f64) < 0.01 * runs as f64,
        "{coincidences} coincidences"
    );
}
