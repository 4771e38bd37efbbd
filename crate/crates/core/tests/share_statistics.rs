use dtbas_core::rng::labeled_stream;
use dtbas_core::sharing::{partial_view_distribution, Binning};
use dtbas_core::{ShareScheme, SimConfig};

/// Upper 1% quantile of chi-square with `df` degrees of freedom
/// (Wilson-Hilferty).
fn chi2_critical_01(df: f64) -> f64 {
    const Z_99: f64 = 2.326_347_874;
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + Z_99 * a.sqrt()).powi(3)
}

/// Two-sample homogeneity statistic for equal sample sizes.
fn two_sample_chi2(a: &[u64], b: &[u64]) -> (f64, f64) {
    let mut stat = 0.0;
    let mut cells = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x + y > 0 {
            let d = x as f64 - y as f64;
            stat += d * d / (x + y) as f64;
            cells += 1;
        }
    }
    (stat, (cells - 1) as f64)
}

fn goodness_of_fit_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

fn additive() -> SimConfig {
    SimConfig::builder(3, 3)
        .scheme(ShareScheme::AdditiveRandom)
        .build()
        .unwrap()
}

#[test]
fn chi2_critical_matches_tables() {
    assert!((chi2_critical_01(10.0) - 23.209).abs() < 0.05);
    assert!((chi2_critical_01(63.0) - 92.010).abs() < 0.1);
}

#[test]
fn single_share_distribution_does_not_depend_on_secret() {
    let config = additive();
    let h5 = partial_view_distribution(
        5,
        1,
        100_000,
        Binning::Buckets(64),
        &config,
        &mut labeled_stream(4, "chi", 0),
    )
    .unwrap()
    .bucket_counts()
    .unwrap();
    let h900 = partial_view_distribution(
        900,
        1,
        100_000,
        Binning::Buckets(64),
        &config,
        &mut labeled_stream(4, "chi", 1),
    )
    .unwrap()
    .bucket_counts()
    .unwrap();
    let (stat, df) = two_sample_chi2(&h5, &h900);
    assert!(stat < chi2_critical_01(df), "chi2 {stat} df {df}");
    for h in [&h5, &h900] {
        assert!(goodness_of_fit_uniform(h) < chi2_critical_01(63.0));
    }
}

#[test]
fn two_share_view_does_not_depend_on_secret() {
    let config = additive();
    let dense = |secret: u64, idx: u64| {
        let h = partial_view_distribution(
            secret,
            2,
            100_000,
            Binning::Buckets(8),
            &config,
            &mut labeled_stream(5, "chi-pair", idx),
        )
        .unwrap();
        let mut cells = vec![0u64; 64];
        for (key, &c) in &h.counts {
            cells[(key[0] * 8 + key[1]) as usize] += c;
        }
        cells
    };
    let (stat, df) = two_sample_chi2(&dense(5, 0), &dense(900, 1));
    assert!(stat < chi2_critical_01(df), "chi2 {stat} df {df}");
}

#[test]
fn naive_single_share_is_deterministic() {
    let config = SimConfig::builder(3, 3)
        .scheme(ShareScheme::NaiveEqualSplit)
        .build()
        .unwrap();
    let h = partial_view_distribution(
        9,
        1,
        1_000,
        Binning::Exact,
        &config,
        &mut labeled_stream(6, "naive", 0),
    )
    .unwrap();
    assert_eq!(h.counts.len(), 1);
    assert_eq!(h.counts[&vec![3]], 1_000);
}
