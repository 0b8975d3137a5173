//! Hourly year of load / PV / tariff data: synthesis, CSV ingest and
//! serialization, train/test splits, and episode slicing.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calendar::{
    day_of_month, hour_of_index, month_hours, month_of_index, month_start_hour, HOURS_PER_YEAR,
    SYNTHETIC_YEAR,
};
use crate::error::{Error, Result};

/// One hour of data. At hourly resolution a kW reading over the step equals
/// kWh, so all energy math uses the raw powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepRecord {
    pub index: usize,
    pub hour: u8,
    pub month: u8,
    pub load_kw: f64,
    pub pv_kw: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic { seed: u64 },
    Csv { path: PathBuf },
}

/// Exactly 8760 validated records in hour order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesYear {
    pub records: Vec<TimeStepRecord>,
    pub source: DataSource,
}

impl TimeSeriesYear {
    pub fn load_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.load_kw).collect()
    }

    pub fn pv_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.pv_kw).collect()
    }

    pub fn price_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.price).collect()
    }
}

/// Which months feed fitting/training and which are held out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_months: BTreeSet<u8>,
    pub test_months: BTreeSet<u8>,
}

impl SplitSpec {
    pub fn new(train: &[u8], test: &[u8]) -> Result<Self> {
        let train_months: BTreeSet<u8> = train.iter().copied().collect();
        let test_months: BTreeSet<u8> = test.iter().copied().collect();
        for m in train_months.iter().chain(test_months.iter()) {
            if !(1..=12).contains(m) {
                return Err(Error::Config(format!("month {m} out of range 1..=12")));
            }
        }
        if !train_months.is_disjoint(&test_months) {
            return Err(Error::Config("train and test months overlap".into()));
        }
        Ok(Self { train_months, test_months })
    }

    /// Heater default: train on January and July, test on the other ten.
    pub fn heater_default() -> Self {
        let test: Vec<u8> = (1..=12).filter(|m| *m != 1 && *m != 7).collect();
        Self::new(&[1, 7], &test).unwrap()
    }

    /// Battery default: train on January, test on February..December.
    pub fn battery_default() -> Self {
        let test: Vec<u8> = (2..=12).collect();
        Self::new(&[1], &test).unwrap()
    }
}

/// Half-open hour-of-day range, e.g. 6..8 covers hours 6 and 7.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourRange {
    pub start: u8,
    pub end: u8,
}

impl HourRange {
    pub fn new(start: u8, end: u8) -> Self {
        assert!(start < end && end <= 24);
        Self { start, end }
    }

    pub fn contains(&self, hour: u8) -> bool {
        hour >= self.start && hour < self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Synthetic-year knobs. Defaults reproduce a two-peak dairy profile:
/// flat base load, morning and evening milking blocks, PV as a truncated
/// diurnal sinusoid with a summer-peaked seasonal factor, and a three-level
/// time-of-use tariff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub pv_peak_kw: f64,
    pub base_load_kw: f64,
    pub milking_peak_kw: f64,
    pub milking_hours: [HourRange; 2],
    pub tariff_levels: Vec<(HourRange, f64)>,
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            pv_peak_kw: 20.0,
            base_load_kw: 8.0,
            milking_peak_kw: 15.0,
            milking_hours: [HourRange::new(6, 8), HourRange::new(17, 19)],
            tariff_levels: vec![
                (HourRange::new(0, 7), 0.10),
                (HourRange::new(7, 17), 0.20),
                (HourRange::new(17, 20), 0.30),
                (HourRange::new(20, 24), 0.20),
            ],
            noise_std: 0.05,
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pv_peak_kw < 0.0 || self.base_load_kw < 0.0 || self.milking_peak_kw < 0.0 {
            return Err(Error::Validation("synthetic powers must be non-negative".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Validation("noise_std must be non-negative".into()));
        }
        let mut covered = [0u8; 24];
        for (range, price) in &self.tariff_levels {
            if *price < 0.0 {
                return Err(Error::Validation("tariff price must be non-negative".into()));
            }
            for h in range.start..range.end {
                covered[h as usize] += 1;
            }
        }
        if covered.iter().any(|&c| c != 1) {
            return Err(Error::Validation(
                "tariff levels must cover all 24 hours exactly once".into(),
            ));
        }
        Ok(())
    }

    pub fn price_at(&self, hour: u8) -> f64 {
        for (range, price) in &self.tariff_levels {
            if range.contains(hour) {
                return *price;
            }
        }
        unreachable!("tariff validated to cover all hours")
    }
}

/// Seasonal derating of PV output: mean 0.40, peaking at 0.65 around day 172
/// (late June) and bottoming at 0.15 midwinter. With the 06:00-18:00 sine
/// daylight window this integrates to roughly 1100 full-power hours per year.
pub fn pv_seasonal_factor(day_of_year: usize) -> f64 {
    0.40 + 0.25 * (2.0 * std::f64::consts::PI * (day_of_year as f64 - 172.0) / 365.0).cos()
}

/// Solar elevation proxy: positive between hours 6 and 18, sinusoidal.
pub fn pv_elevation(hour: u8) -> f64 {
    (std::f64::consts::PI * (hour as f64 - 6.0) / 12.0).sin()
}

/// Round to the 4-fractional-digit CSV wire format; this is the quantization
/// fixed point, so generated data round-trips through CSV bit-exactly.
pub fn quantize(value: f64) -> f64 {
    format!("{value:.4}").parse().unwrap()
}

/// Deterministic synthetic year: pure function of the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeriesYear> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut records = Vec::with_capacity(HOURS_PER_YEAR);
    for index in 0..HOURS_PER_YEAR {
        let hour = hour_of_index(index);
        let day = index / 24;
        let month = month_of_index(index);

        let mut load = spec.base_load_kw;
        if spec.milking_hours.iter().any(|r| r.contains(hour)) {
            load += spec.milking_peak_kw;
        }
        let n_load: f64 = noise.sample(&mut rng);
        let n_pv: f64 = noise.sample(&mut rng);
        load = (load * (1.0 + n_load)).max(0.0);

        let elev = pv_elevation(hour);
        let pv = if elev > 0.0 {
            (spec.pv_peak_kw * pv_seasonal_factor(day) * elev * (1.0 + n_pv)).max(0.0)
        } else {
            0.0
        };

        records.push(TimeStepRecord {
            index,
            hour,
            month,
            load_kw: quantize(load),
            pv_kw: quantize(pv),
            price: quantize(spec.price_at(hour)),
        });
    }
    Ok(TimeSeriesYear { records, source: DataSource::Synthetic { seed: spec.seed } })
}

const CSV_HEADER: &str = "timestamp,load_kw,pv_kw,price";

fn format_timestamp(index: usize) -> String {
    format!(
        "{SYNTHETIC_YEAR:04}-{:02}-{:02}T{:02}:00:00",
        month_of_index(index),
        day_of_month(index),
        hour_of_index(index)
    )
}

/// Serialize with exactly four fractional digits per numeric field.
pub fn write_csv(year: &TimeSeriesYear, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(HOURS_PER_YEAR * 48);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &year.records {
        writeln!(
            out,
            "{},{:.4},{:.4},{:.4}",
            format_timestamp(r.index),
            r.load_kw,
            r.pv_kw,
            r.price
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_decimal(field: &str, row: usize, name: &str) -> Result<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() || trimmed.contains(['e', 'E']) {
        return Err(Error::Validation(format!(
            "row {row}: {name} must be a plain decimal, got '{field}'"
        )));
    }
    if let Some((_, frac)) = trimmed.split_once('.') {
        if frac.len() > 6 {
            return Err(Error::Validation(format!(
                "row {row}: {name} has more than 6 fractional digits: '{field}'"
            )));
        }
    }
    trimmed
        .parse::<f64>()
        .map_err(|_| Error::Validation(format!("row {row}: cannot parse {name} '{field}'")))
}

/// Timestamp must be ISO-8601 on the hour: YYYY-MM-DDTHH:00:00.
fn parse_timestamp(ts: &str, row: usize) -> Result<(u32, u8, usize, u8)> {
    let bad = || Error::Ingest {
        index: row,
        reason: format!("malformed timestamp '{ts}' (expected YYYY-MM-DDTHH:00:00)"),
    };
    let bytes = ts.as_bytes();
    if bytes.len() != 19 || bytes[4] != b'-' || bytes[7] != b'-' || bytes[10] != b'T' {
        return Err(bad());
    }
    if &ts[13..] != ":00:00" {
        return Err(bad());
    }
    let year: u32 = ts[0..4].parse().map_err(|_| bad())?;
    let month: u8 = ts[5..7].parse().map_err(|_| bad())?;
    let day: usize = ts[8..10].parse().map_err(|_| bad())?;
    let hour: u8 = ts[11..13].parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) || hour > 23 {
        return Err(bad());
    }
    if month == 2 && day == 29 {
        return Err(Error::Ingest {
            index: row,
            reason: "leap day rows are not accepted (fixed 8760-hour calendar)".into(),
        });
    }
    Ok((year, month, day, hour))
}

/// Read and validate a full year. Rows must start at January 1st 00:00 and
/// advance one hour at a time; a skipped or repeated hour is reported at the
/// first index where the sequence breaks.
pub fn load_csv(path: &Path) -> Result<TimeSeriesYear> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Ingest {
                index: 0,
                reason: format!("bad header {:?}, expected '{CSV_HEADER}'", other.unwrap_or("")),
            })
        }
    }

    let mut records = Vec::with_capacity(HOURS_PER_YEAR);
    let mut file_year: Option<u32> = None;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i >= HOURS_PER_YEAR {
            return Err(Error::Ingest {
                index: i,
                reason: "more than 8760 data rows".into(),
            });
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Ingest {
                index: i,
                reason: format!("expected 4 comma-separated fields, got {}", fields.len()),
            });
        }
        let (year, month, day, hour) = parse_timestamp(fields[0], i)?;
        match file_year {
            None => file_year = Some(year),
            Some(y) if y != year => {
                return Err(Error::Ingest {
                    index: i,
                    reason: format!("year changed from {y} to {year} mid-file"),
                })
            }
            _ => {}
        }
        let expected = (month_of_index(i), day_of_month(i), hour_of_index(i));
        if (month, day, hour) != expected {
            return Err(Error::Ingest {
                index: i,
                reason: format!(
                    "timestamp {} does not match expected hour {:02}-{:02}T{:02} \
                     (missing, duplicate, or out-of-order row)",
                    fields[0], expected.0, expected.1, expected.2
                ),
            });
        }
        let load_kw = parse_decimal(fields[1], i, "load_kw")?;
        let pv_kw = parse_decimal(fields[2], i, "pv_kw")?;
        let price = parse_decimal(fields[3], i, "price")?;
        for (name, v) in [("load_kw", load_kw), ("pv_kw", pv_kw), ("price", price)] {
            if v < 0.0 {
                return Err(Error::Validation(format!("row {i}: negative {name} ({v})")));
            }
        }
        records.push(TimeStepRecord { index: i, hour, month, load_kw, pv_kw, price });
    }
    if records.len() != HOURS_PER_YEAR {
        return Err(Error::Ingest {
            index: records.len(),
            reason: format!("file ends after {} rows, expected 8760", records.len()),
        });
    }
    Ok(TimeSeriesYear { records, source: DataSource::Csv { path: path.to_path_buf() } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRole {
    Train,
    Test,
}

/// Chop each month of the requested role into consecutive `episode_len`-hour
/// windows. Windows never cross month boundaries; a trailing partial window
/// is dropped.
pub fn slice_episodes(
    split: &SplitSpec,
    role: SplitRole,
    episode_len: usize,
) -> Result<Vec<Range<usize>>> {
    if episode_len == 0 {
        return Err(Error::Config("episode_len must be positive".into()));
    }
    let months = match role {
        SplitRole::Train => &split.train_months,
        SplitRole::Test => &split.test_months,
    };
    if months.is_empty() {
        return Err(Error::Config("requested role has an empty month set".into()));
    }
    let mut out = Vec::new();
    for &m in months {
        let start = month_start_hour(m);
        let hours = month_hours(m);
        let mut cursor = start;
        while cursor + episode_len <= start + hours {
            out.push(cursor..cursor + episode_len);
            cursor += episode_len;
        }
    }
    Ok(out)
}
