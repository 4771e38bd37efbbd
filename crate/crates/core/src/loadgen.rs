//! Synthetic load profiles, CSV ingestion of readings, and JSON report files.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeterId, INTERVALS_PER_DAY};

/// One meter's consumption series, watt-hours per 15-minute interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoadProfile(Vec<u64>);

impl LoadProfile {
    pub fn new(values: Vec<u64>) -> Self {
        LoadProfile(values)
    }

    pub fn zeros(len: usize) -> Self {
        LoadProfile(vec![0; len])
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u128 {
        self.0.iter().map(|&v| v as u128).sum()
    }

    pub fn max(&self) -> u64 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn check_bound(&self, bound: u64) -> Result<()> {
        match self.0.iter().position(|&v| v >= bound) {
            Some(t) => Err(Error::Domain(format!(
                "value {} at interval {t} not below bound {bound}",
                self.0[t]
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    /// Constant base load.
    Flat,
    /// Base load with spikes at breakfast and dinner.
    Peaky,
    /// Daily sinusoid between base and peak.
    Diurnal,
}

/// Slots (of 96 per day) where `Peaky` profiles spike: 07:30 and 18:30.
pub const MEAL_SLOTS: [u32; 2] = [30, 74];
/// Default diurnal maximum at 19:00.
pub const DEFAULT_PEAK_SLOT: u32 = 76;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGenSpec {
    pub archetype: Archetype,
    pub base_wh: u64,
    pub peak_wh: u64,
    pub noise_std: f64,
    pub length: usize,
    /// Slot of the daily maximum for `Diurnal`.
    pub peak_slot: u32,
    /// Values are clamped to `0..ceiling`.
    pub ceiling: u64,
}

impl ProfileGenSpec {
    pub fn new(
        archetype: Archetype,
        base_wh: u64,
        peak_wh: u64,
        noise_std: f64,
        length: usize,
    ) -> Self {
        ProfileGenSpec {
            archetype,
            base_wh,
            peak_wh,
            noise_std,
            length,
            peak_slot: DEFAULT_PEAK_SLOT,
            ceiling: u64::MAX,
        }
    }

    pub fn flat(base_wh: u64, noise_std: f64, length: usize) -> Self {
        Self::new(Archetype::Flat, base_wh, base_wh, noise_std, length)
    }

    pub fn with_ceiling(mut self, ceiling: u64) -> Self {
        self.ceiling = ceiling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.peak_wh < self.base_wh {
            return Err(Error::Domain(format!(
                "peak_wh {} below base_wh {}",
                self.peak_wh, self.base_wh
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Domain(format!(
                "noise_std {} invalid",
                self.noise_std
            )));
        }
        if self.length == 0 {
            return Err(Error::Domain("profile length must be positive".into()));
        }
        if self.peak_slot >= INTERVALS_PER_DAY {
            return Err(Error::Domain(format!(
                "peak_slot {} outside a day",
                self.peak_slot
            )));
        }
        if self.ceiling <= self.peak_wh {
            return Err(Error::Domain(format!(
                "ceiling {} must exceed peak_wh {}",
                self.ceiling, self.peak_wh
            )));
        }
        Ok(())
    }

    /// Noise-free value at interval `t`.
    pub fn shape(&self, t: usize) -> f64 {
        let slot = (t % INTERVALS_PER_DAY as usize) as u32;
        let (base, peak) = (self.base_wh as f64, self.peak_wh as f64);
        match self.archetype {
            Archetype::Flat => base,
            Archetype::Peaky => {
                if MEAL_SLOTS.contains(&slot) {
                    peak
                } else {
                    base
                }
            }
            Archetype::Diurnal => {
                let phase = TAU * (slot as f64 - self.peak_slot as f64) / INTERVALS_PER_DAY as f64;
                base + (peak - base) * (1.0 + phase.cos()) / 2.0
            }
        }
    }
}

/// Draws a profile: the archetype's shape plus Gaussian noise, rounded to
/// whole watt-hours and clamped to `0..ceiling`.
pub fn generate_profile<R: Rng + ?Sized>(
    spec: &ProfileGenSpec,
    rng: &mut R,
) -> Result<LoadProfile> {
    spec.validate()?;
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| Error::Domain(e.to_string()))?)
    } else {
        None
    };
    let top = (spec.ceiling - 1) as f64;
    let values = (0..spec.length)
        .map(|t| {
            let mut v = spec.shape(t);
            if let Some(n) = &noise {
                v += n.sample(rng);
            }
            v.round().clamp(0.0, top) as u64
        })
        .collect();
    Ok(LoadProfile(values))
}

/// A noisy diurnal household whose base and peak load are drawn per meter
/// from the run seed.
pub fn synthetic_household(
    meter: MeterId,
    length: usize,
    seed: u64,
    ceiling: u64,
) -> Result<LoadProfile> {
    let mut stream = crate::rng::labeled_stream(seed, "household", meter.0 as u64);
    let base = stream.random_range(50..200u64);
    let peak = base + stream.random_range(200..1500u64);
    let spec = ProfileGenSpec {
        peak_slot: stream.random_range(64..84),
        ..ProfileGenSpec::new(Archetype::Diurnal, base, peak, 30.0, length)
    }
    .with_ceiling(ceiling);
    generate_profile(&spec, &mut stream)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    meter_id: u32,
    interval: u32,
    wh: u64,
}

pub const CSV_HEADER: [&str; 3] = ["meter_id", "interval", "wh"];

/// Reads `meter_id,interval,wh` rows. Meter ids must be dense from 0 and each
/// meter's intervals dense from 0, all of equal length; values must be below
/// `bound`.
pub fn ingest_csv(path: &Path, bound: u64) -> Result<BTreeMap<MeterId, LoadProfile>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, bound)
}

pub fn parse_csv<R: std::io::Read>(input: R, bound: u64) -> Result<BTreeMap<MeterId, LoadProfile>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Schema(format!(
            "expected header {:?}, got {:?}",
            CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut cells: BTreeMap<u32, BTreeMap<u32, u64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let trimmed: csv::StringRecord = record.iter().map(str::trim).collect();
        let row: CsvRow = trimmed
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        if row.wh >= bound {
            return Err(Error::Domain(format!(
                "line {line}: {} Wh not below bound {bound}",
                row.wh
            )));
        }
        if cells
            .entry(row.meter_id)
            .or_default()
            .insert(row.interval, row.wh)
            .is_some()
        {
            return Err(Error::Parse {
                line,
                message: format!(
                    "duplicate row for meter {} interval {}",
                    row.meter_id, row.interval
                ),
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::Schema("no readings".into()));
    }
    let mut out = BTreeMap::new();
    let mut expected_len = None;
    for (idx, (&meter, series)) in cells.iter().enumerate() {
        if meter as usize != idx {
            return Err(Error::Schema(format!(
                "meter ids not dense: expected {idx}, found {meter}"
            )));
        }
        if let Some((pos, (&t, _))) = series
            .iter()
            .enumerate()
            .find(|(pos, (&t, _))| *pos as u32 != t)
        {
            return Err(Error::Schema(format!(
                "meter {meter}: intervals not dense, expected {pos} found {t}"
            )));
        }
        match expected_len {
            None => expected_len = Some(series.len()),
            Some(len) if len != series.len() => {
                return Err(Error::Schema(format!(
                    "ragged profiles: meter {meter} has {} intervals, meter 0 has {len}",
                    series.len()
                )))
            }
            _ => {}
        }
        out.insert(
            MeterId(meter),
            LoadProfile(series.values().copied().collect()),
        );
    }
    Ok(out)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_csv<W: std::io::Write>(
    profiles: &BTreeMap<MeterId, LoadProfile>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Schema(e.to_string());
    for (meter, profile) in profiles {
        for (t, &wh) in profile.values().iter().enumerate() {
            w.serialize(CsvRow {
                meter_id: meter.0,
                interval: t as u32,
                wh,
            })
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Schema(e.to_string()))?;
    Ok(())
}

pub fn export_csv(profiles: &BTreeMap<MeterId, LoadProfile>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(profiles, &mut buf)?;
    write_atomic(path, &buf)
}

/// Canonical JSON: object keys sorted, pretty-printed, trailing newline.
pub fn to_canonical_json<T: Serialize>(report: &T) -> Result<String> {
    // serde_json's Map is ordered by key unless `preserve_order` is enabled.
    let value = serde_json::to_value(report)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

/// Writes the canonical JSON form of `report` via a temp file and rename.
pub fn persist_report<T: Serialize>(report: &T, path: &Path) -> Result<()> {
    let text = to_canonical_json(report)?;
    write_atomic(path, text.as_bytes())
}

/// Writes already-rendered report text via a temp file and rename.
pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

pub fn load_report<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn flat_without_noise_is_constant() {
        let p = generate_profile(&ProfileGenSpec::flat(100, 0.0, 96), &mut rng::stream(0)).unwrap();
        assert!(p.values().iter().all(|&v| v == 100));
        assert_eq!(p.len(), 96);
    }

    #[test]
    fn diurnal_matches_closed_form() {
        let spec = ProfileGenSpec::new(Archetype::Diurnal, 50, 500, 0.0, 96);
        let p = generate_profile(&spec, &mut rng::stream(0)).unwrap();
        // closed form: 50 + 450 * (1 + cos(2pi (t - 76) / 96)) / 2
        for (t, &v) in p.values().iter().enumerate() {
            let want = 50.0 + 450.0 * (1.0 + (TAU * (t as f64 - 76.0) / 96.0).cos()) / 2.0;
            assert_eq!(v, want.round() as u64, "t = {t}");
        }
        // rounding flattens the crest, so check the peak and trough slots hold the extremes
        let min = *p.values().iter().min().unwrap();
        assert_eq!(p.values()[76], p.max());
        assert_eq!(p.values()[(76 + 48) % 96], min);
        assert_eq!(p.values()[76], 500);
        assert_eq!(p.values()[28], 50);
        let mean = p.total() as f64 / 96.0;
        assert!((50.0..=500.0).contains(&mean));
        assert!((mean - 275.0).abs() < 1.0);
    }

    #[test]
    fn peaky_spikes_at_meals() {
        let spec = ProfileGenSpec::new(Archetype::Peaky, 80, 900, 0.0, 192);
        let p = generate_profile(&spec, &mut rng::stream(0)).unwrap();
        for (t, &v) in p.values().iter().enumerate() {
            let meal = MEAL_SLOTS.contains(&((t % 96) as u32));
            assert_eq!(v, if meal { 900 } else { 80 });
        }
    }

    #[test]
    fn noisy_generation_is_seeded() {
        let spec = ProfileGenSpec::new(Archetype::Diurnal, 50, 500, 25.0, 96);
        let a = generate_profile(&spec, &mut rng::stream(42)).unwrap();
        let b = generate_profile(&spec, &mut rng::stream(42)).unwrap();
        let c = generate_profile(&spec, &mut rng::stream(43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn clamping() {
        let spec = ProfileGenSpec::new(Archetype::Flat, 0, 0, 50.0, 500).with_ceiling(10);
        let p = generate_profile(&spec, &mut rng::stream(1)).unwrap();
        assert!(p.values().iter().all(|&v| v < 10));
        assert!(p.values().contains(&0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = ProfileGenSpec::new(Archetype::Diurnal, 500, 50, 0.0, 96);
        assert!(generate_profile(&s, &mut rng::stream(0)).is_err());
        s = ProfileGenSpec::flat(10, -1.0, 96);
        assert!(generate_profile(&s, &mut rng::stream(0)).is_err());
        s = ProfileGenSpec::flat(10, 0.0, 0);
        assert!(generate_profile(&s, &mut rng::stream(0)).is_err());
        s = ProfileGenSpec::flat(10, 0.0, 5).with_ceiling(10);
        assert!(generate_profile(&s, &mut rng::stream(0)).is_err());
    }

    fn csv_text(rows: &[(u32, u32, &str)]) -> String {
        let mut s = String::from("meter_id,interval,wh\n");
        for (m, t, wh) in rows {
            s.push_str(&format!("{m},{t},{wh}\n"));
        }
        s
    }

    #[test]
    fn csv_happy_path() {
        let mut rows = Vec::new();
        for m in 0..3 {
            for t in 0..96 {
                rows.push((m, t, "42"));
            }
        }
        let profiles = parse_csv(csv_text(&rows).as_bytes(), 1000).unwrap();
        assert_eq!(profiles.len(), 3);
        assert!(profiles.values().all(|p| p.len() == 96));
    }

    #[test]
    fn csv_negative_energy_names_line() {
        let text = csv_text(&[(0, 0, "1"), (0, 1, "-5")]);
        match parse_csv(text.as_bytes(), 1000) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_is_schema_error() {
        let text = csv_text(&[(0, 0, "1"), (0, 1, "1"), (1, 0, "1")]);
        assert!(matches!(
            parse_csv(text.as_bytes(), 1000),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn csv_bound_and_gaps() {
        let text = csv_text(&[(0, 0, "1000")]);
        assert!(matches!(
            parse_csv(text.as_bytes(), 1000),
            Err(Error::Domain(_))
        ));
        let text = csv_text(&[(0, 0, "1"), (0, 2, "1")]);
        assert!(matches!(
            parse_csv(text.as_bytes(), 1000),
            Err(Error::Schema(_))
        ));
        let text = csv_text(&[(1, 0, "1")]);
        assert!(matches!(
            parse_csv(text.as_bytes(), 1000),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_csv("a,b,c\n1,2,3\n".as_bytes(), 1000),
            Err(Error::Schema(_))
        ));
        let text = csv_text(&[(0, 0, "1"), (0, 0, "2")]);
        assert!(matches!(
            parse_csv(text.as_bytes(), 1000),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn csv_export_ingest_identity(
            rows in prop::collection::vec(prop::collection::vec(0u64..10_000, 5), 1..6),
        ) {
            let profiles: BTreeMap<MeterId, LoadProfile> = rows
                .into_iter()
                .enumerate()
                .map(|(i, v)| (MeterId(i as u32), LoadProfile::new(v)))
                .collect();
            let mut buf = Vec::new();
            write_csv(&profiles, &mut buf).unwrap();
            prop_assert_eq!(parse_csv(buf.as_slice(), 10_000).unwrap(), profiles);
        }
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Sample {
        zeta: u32,
        alpha: Vec<f64>,
        nested: BTreeMap<String, i64>,
    }

    #[test]
    fn persist_is_canonical_and_atomic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let s = Sample {
            zeta: 1,
            alpha: vec![0.1, 1.0 / 3.0],
            nested: [("b".to_string(), 2), ("a".to_string(), -1)]
                .into_iter()
                .collect(),
        };
        persist_report(&s, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        persist_report(&s, &path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        let text = String::from_utf8(first).unwrap();
        assert!(text.ends_with('\n'));
        assert!(text.find("\"alpha\"").unwrap() < text.find("\"zeta\"").unwrap());
        let back: Sample = load_report(&path).unwrap();
        assert_eq!(back, s);
        // only the target file remains
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn persist_into_missing_dir_fails_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope").join("r.json");
        match persist_report(&1u32, &path) {
            Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }
}
