//! Entropy-based degree of anonymity.
//!
//! An attacker's knowledge is a probability assignment over `s` candidates
//! (shares or users). With `H = -sum p_i log2 p_i` and `H_max = log2 s`, the
//! degree of anonymity is `d = 1 - (H_max - H) / H_max`, which is `H / H_max`.
//! A single candidate has `H_max = 0` and no defined degree.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subject {
    OverSplits,
    OverUsers,
}

/// Probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityProfile {
    probabilities: Vec<f64>,
    subject: Subject,
}

impl ProbabilityProfile {
    pub fn new(probabilities: Vec<f64>, subject: Subject) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Domain("empty probability profile".into()));
        }
        if let Some(p) = probabilities
            .iter()
            .find(|p| !(p.is_finite() && **p >= 0.0 && **p <= 1.0))
        {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbabilityProfile {
            probabilities,
            subject,
        })
    }

    pub fn uniform(s: usize, subject: Subject) -> Result<Self> {
        if s == 0 {
            return Err(Error::Domain("uniform profile over zero candidates".into()));
        }
        Self::new(vec![1.0 / s as f64; s], subject)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn subject(&self) -> Subject {
        self.subject
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Shannon entropy in bits; zero-probability terms contribute nothing.
pub fn entropy(profile: &ProbabilityProfile) -> f64 {
    -profile
        .probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

pub fn max_entropy(s: usize) -> Result<f64> {
    if s < 1 {
        return Err(Error::Domain(
            "max entropy needs at least one candidate".into(),
        ));
    }
    Ok((s as f64).log2())
}

/// A degree of anonymity, undefined when there is only one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degree {
    Defined(f64),
    Undefined,
}

impl Degree {
    pub fn value(self) -> Option<f64> {
        match self {
            Degree::Defined(d) => Some(d),
            Degree::Undefined => None,
        }
    }
}

pub fn degree_of_anonymity(profile: &ProbabilityProfile) -> Degree {
    let h_max = (profile.len() as f64).log2();
    if h_max <= 0.0 {
        return Degree::Undefined;
    }
    let h = entropy(profile);
    Degree::Defined(1.0 - (h_max - h) / h_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnonymityReport {
    pub entropy_bits: f64,
    pub max_entropy_bits: f64,
    pub degree: Degree,
}

impl AnonymityReport {
    pub fn of(profile: &ProbabilityProfile) -> Self {
        AnonymityReport {
            entropy_bits: entropy(profile),
            max_entropy_bits: (profile.len() as f64).log2(),
            degree: degree_of_anonymity(profile),
        }
    }
}

/// Attacker-favourable assignment over `s >= 3` splits: one split at 0.50,
/// `s - 2` splits at 0.01, the rest on the second split.
pub fn decremental_profile(s: usize) -> Result<ProbabilityProfile> {
    if s < 3 {
        return Err(Error::Domain(format!(
            "decremental profile needs s >= 3 (got {s})"
        )));
    }
    let tail = 0.01;
    let mut p = vec![0.50, 1.0 - 0.50 - tail * (s - 2) as f64];
    p.extend(std::iter::repeat_n(tail, s - 2));
    ProbabilityProfile::new(p, Subject::OverSplits)
}

/// Probability that a given one of `n` indistinguishable users originated a
/// reading. Two users are accepted only for table reproduction.
pub fn uniform_user_probability(n: u32, table_reproduction: bool) -> Result<f64> {
    let min = if table_reproduction { 2 } else { 3 };
    if n < min {
        return Err(Error::Domain(format!(
            "user probability needs n >= {min} (got {n})"
        )));
    }
    Ok(1.0 / n as f64)
}

/// Half-up rounding to two decimals.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    // guard binary representation error on exact half-cents like 0.125
    let nudged = scaled + scaled.signum() * 1e-9;
    nudged.round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub splits: usize,
    pub probabilities: Vec<f64>,
    /// `H` as printed in the comparison tables, i.e. with a leading minus.
    pub printed_entropy: f64,
    pub entropy_bits: f64,
    pub max_entropy_bits: f64,
    pub degree: Degree,
}

impl SplitRow {
    fn from_profile(profile: &ProbabilityProfile) -> Self {
        let r = AnonymityReport::of(profile);
        SplitRow {
            splits: profile.len(),
            probabilities: profile.probabilities().to_vec(),
            printed_entropy: -r.entropy_bits,
            entropy_bits: r.entropy_bits,
            max_entropy_bits: r.max_entropy_bits,
            degree: r.degree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub users: u32,
    pub probability: f64,
}

/// Equal-probability, variable-probability and per-user comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTables {
    pub equal_probability: Vec<SplitRow>,
    pub variable_probability: Vec<SplitRow>,
    pub user_probability: Vec<UserRow>,
}

pub fn emit_reference_tables() -> ReferenceTables {
    let equal_probability = (1..=5)
        .map(|s| {
            SplitRow::from_profile(
                &ProbabilityProfile::uniform(s, Subject::OverSplits).expect("s >= 1"),
            )
        })
        .collect();
    let variable_probability = (3..=5)
        .map(|s| SplitRow::from_profile(&decremental_profile(s).expect("s >= 3")))
        .collect();
    let user_probability = (2..=6)
        .map(|n| UserRow {
            users: n,
            probability: uniform_user_probability(n, true).expect("n >= 2"),
        })
        .collect();
    ReferenceTables {
        equal_probability,
        variable_probability,
        user_probability,
    }
}

fn fmt_entropy(h: f64) -> String {
    let r = round2(h);
    if r == 0.0 {
        "0.00".to_string()
    } else {
        format!("{r:.2}")
    }
}

fn fmt_degree(d: Degree) -> String {
    match d {
        Degree::Undefined => "None".to_string(),
        Degree::Defined(x) => {
            let s = format!("{:.2}", round2(x));
            // printed as "1.0", "0.68"
            match s.strip_suffix('0') {
                Some(t) if !t.ends_with('.') => t.to_string(),
                _ => s,
            }
        }
    }
}

fn write_split_table(out: &mut String, title: &str, rows: &[SplitRow]) -> fmt::Result {
    writeln!(out, "{title}")?;
    writeln!(
        out,
        "{:>6}  {:<6}  {:>7}  {:>9}  {:>5}",
        "m", "P_i", "H(ES)", "H(MaxES)", "d_a"
    )?;
    for row in rows {
        for (i, p) in row.probabilities.iter().enumerate() {
            if i == 0 {
                writeln!(
                    out,
                    "{:>6}  {:<6.2}  {:>7}  {:>9.2}  {:>5}",
                    row.splits,
                    round2(*p),
                    fmt_entropy(row.printed_entropy),
                    round2(row.max_entropy_bits),
                    fmt_degree(row.degree)
                )?;
            } else {
                writeln!(out, "{:>6}  {:<6.2}", "", round2(*p))?;
            }
        }
    }
    Ok(())
}

impl ReferenceTables {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_split_table(
            &mut out,
            "Degree of anonymity, equal probability",
            &self.equal_probability,
        )
        .and_then(|_| writeln!(out))
        .and_then(|_| {
            write_split_table(
                &mut out,
                "Degree of anonymity, variable probability",
                &self.variable_probability,
            )
        })
        .and_then(|_| writeln!(out))
        .and_then(|_| writeln!(out, "Probability of a user being the originator"))
        .and_then(|_| writeln!(out, "{:>6}  {:>8}", "n", "P_user"))
        .expect("writing to a String cannot fail");
        for row in &self.user_probability {
            writeln!(out, "{:>6}  {:>8.2}", row.users, round2(row.probability))
                .expect("String write");
        }
        writeln!(out, "{:>6}  {:>8}", "n", "1/n").expect("String write");
        out
    }

    /// Compares every cell, after two-decimal rounding, with the published
    /// values. Returns the first mismatch.
    pub fn check_golden(&self) -> std::result::Result<(), GoldenMismatch> {
        let split_rows = |table: &'static str, rows: &[SplitRow], golden: &[GoldenSplitRow]| {
            if rows.len() != golden.len() {
                return Err(GoldenMismatch {
                    table,
                    row: 0,
                    column: "rows",
                    expected: format!("{}", golden.len()),
                    actual: format!("{}", rows.len()),
                });
            }
            for (row, g) in rows.iter().zip(golden) {
                let cells = [
                    ("H(ES)", g.printed_entropy, round2(row.printed_entropy)),
                    ("H(MaxES)", g.max_entropy, round2(row.max_entropy_bits)),
                ];
                for (column, expected, actual) in cells {
                    if (expected - actual).abs() > 1e-9 {
                        return Err(GoldenMismatch::new(
                            table, g.splits, column, expected, actual,
                        ));
                    }
                }
                let degree_ok = match (g.degree, row.degree) {
                    (None, Degree::Undefined) => true,
                    (Some(e), Degree::Defined(a)) => (e - round2(a)).abs() < 1e-9,
                    _ => false,
                };
                if !degree_ok {
                    return Err(GoldenMismatch {
                        table,
                        row: g.splits as u32,
                        column: "d_a",
                        expected: g.degree.map_or("None".into(), |d| format!("{d:.2}")),
                        actual: fmt_degree(row.degree),
                    });
                }
                for (i, (p, gp)) in row.probabilities.iter().zip(g.probabilities).enumerate() {
                    if (round2(*p) - gp).abs() > 1e-9
                        || row.probabilities.len() != g.probabilities.len()
                    {
                        return Err(GoldenMismatch::new(
                            table,
                            g.splits,
                            PROB_COLUMNS[i],
                            *gp,
                            round2(*p),
                        ));
                    }
                }
            }
            Ok(())
        };
        split_rows("equal-probability", &self.equal_probability, GOLDEN_EQUAL)?;
        split_rows(
            "variable-probability",
            &self.variable_probability,
            GOLDEN_VARIABLE,
        )?;
        for (row, &(n, p)) in self.user_probability.iter().zip(GOLDEN_USERS) {
            if row.users != n || (round2(row.probability) - p).abs() > 1e-9 {
                return Err(GoldenMismatch::new(
                    "user-probability",
                    n as usize,
                    "P_user",
                    p,
                    round2(row.probability),
                ));
            }
        }
        Ok(())
    }
}

const PROB_COLUMNS: [&str; 5] = ["P_1", "P_2", "P_3", "P_4", "P_5"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenMismatch {
    pub table: &'static str,
    pub row: u32,
    pub column: &'static str,
    pub expected: String,
    pub actual: String,
}

impl GoldenMismatch {
    fn new(
        table: &'static str,
        row: usize,
        column: &'static str,
        expected: f64,
        actual: f64,
    ) -> Self {
        GoldenMismatch {
            table,
            row: row as u32,
            column,
            expected: format!("{expected:.2}"),
            actual: format!("{actual:.2}"),
        }
    }
}

impl fmt::Display for GoldenMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} row {} column {}: expected {}, got {}",
            self.table, self.row, self.column, self.expected, self.actual
        )
    }
}

/// Published cells, as printed.
#[derive(Debug, Clone, Copy)]
pub struct GoldenSplitRow {
    pub splits: usize,
    pub probabilities: &'static [f64],
    pub printed_entropy: f64,
    pub max_entropy: f64,
    pub degree: Option<f64>,
}

pub const GOLDEN_EQUAL: &[GoldenSplitRow] = &[
    GoldenSplitRow {
        splits: 1,
        probabilities: &[1.00],
        printed_entropy: 0.00,
        max_entropy: 0.00,
        degree: None,
    },
    GoldenSplitRow {
        splits: 2,
        probabilities: &[0.50, 0.50],
        printed_entropy: -1.00,
        max_entropy: 1.00,
        degree: Some(1.0),
    },
    GoldenSplitRow {
        splits: 3,
        probabilities: &[0.33, 0.33, 0.33],
        printed_entropy: -1.58,
        max_entropy: 1.58,
        degree: Some(1.0),
    },
    GoldenSplitRow {
        splits: 4,
        probabilities: &[0.25, 0.25, 0.25, 0.25],
        printed_entropy: -2.00,
        max_entropy: 2.00,
        degree: Some(1.0),
    },
    GoldenSplitRow {
        splits: 5,
        probabilities: &[0.20, 0.20, 0.20, 0.20, 0.20],
        printed_entropy: -2.32,
        max_entropy: 2.32,
        degree: Some(1.0),
    },
];

pub const GOLDEN_VARIABLE: &[GoldenSplitRow] = &[
    GoldenSplitRow {
        splits: 3,
        probabilities: &[0.50, 0.49, 0.01],
        printed_entropy: -1.07,
        max_entropy: 1.58,
        degree: Some(0.68),
    },
    GoldenSplitRow {
        splits: 4,
        probabilities: &[0.50, 0.48, 0.01, 0.01],
        printed_entropy: -1.14,
        max_entropy: 2.00,
        degree: Some(0.57),
    },
    GoldenSplitRow {
        splits: 5,
        probabilities: &[0.50, 0.47, 0.01, 0.01, 0.01],
        printed_entropy: -1.21,
        max_entropy: 2.32,
        degree: Some(0.52),
    },
];

pub const GOLDEN_USERS: &[(u32, f64)] = &[(2, 0.50), (3, 0.33), (4, 0.25), (5, 0.20), (6, 0.17)];
