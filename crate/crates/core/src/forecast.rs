//! Short-horizon forecasting: a seasonal-naive median, empirical residual
//! percentile bands keyed by (month, hour-of-day), training-month z-scoring
//! with hard clipping, and assembly of the 24-lead forecast block appended to
//! forecast-aware observations.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calendar::{hour_of_index, month_hours, month_of_index, month_start_hour, HOURS_PER_YEAR};
use crate::data::TimeSeriesYear;
use crate::error::{Error, Result};

/// Forecast lead horizon in hours.
pub const HORIZON: usize = 24;

/// Read-only series access; lets tests audit exactly which indices a
/// forecast touches.
pub trait SeriesView {
    fn len(&self) -> usize;
    fn value_at(&self, i: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SeriesView for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }
    fn value_at(&self, i: usize) -> f64 {
        self[i]
    }
}

impl SeriesView for Vec<f64> {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }
    fn value_at(&self, i: usize) -> f64 {
        self[i]
    }
}

/// Median forecast: the value observed 24 hours earlier. The first day has no
/// previous day, so it forecasts itself.
pub fn seasonal_naive_p50(series: &dyn SeriesView, t: usize) -> f64 {
    if t >= 24 {
        series.value_at(t - 24)
    } else {
        series.value_at(t)
    }
}

/// Linear interpolation between closest order statistics (the classic
/// `(n-1)p` positional rule); the band-fitting oracle in the tests uses the
/// same definition.
pub fn percentile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// 10th/90th percentile residuals per (month, hour-of-day), fitted on
/// training months only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBandTable {
    /// (q10, q90) per month (1..=12) and hour (0..24); only fitted months
    /// are populated.
    buckets: Vec<Option<(f64, f64)>>,
    pub fitted_on: BTreeSet<u8>,
}

impl ResidualBandTable {
    fn slot(month: u8, hour: u8) -> usize {
        (month as usize - 1) * 24 + hour as usize
    }

    /// Band for any month: unseen months borrow the nearest fitted month by
    /// circular distance, ties resolved toward the earlier month.
    pub fn lookup(&self, month: u8, hour: u8) -> (f64, f64) {
        let m = if self.fitted_on.contains(&month) {
            month
        } else {
            self.nearest_fitted(month)
        };
        self.buckets[Self::slot(m, hour)].expect("fitted month has all hour buckets")
    }

    fn nearest_fitted(&self, month: u8) -> u8 {
        let mut best: Option<(u8, u8)> = None; // (distance, month)
        for &m in &self.fitted_on {
            let raw = (m as i16 - month as i16).unsigned_abs() as u8;
            let dist = raw.min(12 - raw);
            match best {
                None => best = Some((dist, m)),
                Some((bd, bm)) => {
                    if dist < bd || (dist == bd && m < bm) {
                        best = Some((dist, m));
                    }
                }
            }
        }
        best.expect("band table fitted on at least one month").1
    }
}

/// Fit residual bands: residuals `y_t - y_{t-24}` over training-month indices
/// with `t >= 24` (the warmup day is excluded), bucketed by (month, hour).
/// Buckets with fewer than 4 samples fall back to the month-pooled
/// percentiles. A training month with no usable indices is a config error.
pub fn fit_bands(series: &dyn SeriesView, train_months: &BTreeSet<u8>) -> Result<ResidualBandTable> {
    if train_months.is_empty() {
        return Err(Error::Config("no training months to fit bands on".into()));
    }
    let mut buckets: Vec<Option<(f64, f64)>> = vec![None; 12 * 24];
    for &m in train_months {
        let start = month_start_hour(m);
        let end = start + month_hours(m);
        let mut per_hour: Vec<Vec<f64>> = vec![Vec::new(); 24];
        let mut pooled: Vec<f64> = Vec::new();
        for t in start.max(24)..end.min(series.len()) {
            let r = series.value_at(t) - series.value_at(t - 24);
            per_hour[hour_of_index(t) as usize].push(r);
            pooled.push(r);
        }
        if pooled.is_empty() {
            return Err(Error::Config(format!(
                "training month {m} is absent from the series (length {})",
                series.len()
            )));
        }
        pooled.sort_by(f64::total_cmp);
        let month_q10 = percentile_linear(&pooled, 0.10);
        let month_q90 = percentile_linear(&pooled, 0.90);
        for h in 0..24u8 {
            let mut rs = std::mem::take(&mut per_hour[h as usize]);
            let (q10, q90) = if rs.len() < 4 {
                (month_q10, month_q90)
            } else {
                rs.sort_by(f64::total_cmp);
                (percentile_linear(&rs, 0.10), percentile_linear(&rs, 0.90))
            };
            debug_assert!(q10 <= q90);
            buckets[ResidualBandTable::slot(m, h)] = Some((q10, q90));
        }
    }
    Ok(ResidualBandTable { buckets, fitted_on: train_months.clone() })
}

/// Per-channel z-scoring statistics fitted on training months, with outputs
/// clipped to +-clip_sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt().max(1e-8) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub load: ChannelStats,
    pub pv: ChannelStats,
    pub price: ChannelStats,
    pub clip_sigma: f64,
}

impl Normalizer {
    pub fn fit(year: &TimeSeriesYear, months: &BTreeSet<u8>) -> Self {
        let mut load = Vec::new();
        let mut pv = Vec::new();
        let mut price = Vec::new();
        for r in &year.records {
            if months.contains(&r.month) {
                load.push(r.load_kw);
                pv.push(r.pv_kw);
                price.push(r.price);
            }
        }
        Self {
            load: ChannelStats::fit(&load),
            pv: ChannelStats::fit(&pv),
            price: ChannelStats::fit(&price),
            clip_sigma: 5.0,
        }
    }

    fn z(&self, stats: ChannelStats, x: f64) -> f64 {
        ((x - stats.mean) / stats.std).clamp(-self.clip_sigma, self.clip_sigma)
    }

    pub fn z_load(&self, x: f64) -> f64 {
        self.z(self.load, x)
    }

    pub fn z_pv(&self, x: f64) -> f64 {
        self.z(self.pv, x)
    }

    pub fn z_price(&self, x: f64) -> f64 {
        self.z(self.price, x)
    }
}

/// Channel layout of the forecast block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    /// Median demand and PV forecasts: 2 channels.
    One,
    /// 10th/50th/90th percentiles for both variables: 6 channels.
    All,
}

impl ForecastMode {
    pub fn channels(&self) -> usize {
        match self {
            ForecastMode::One => 2,
            ForecastMode::All => 6,
        }
    }
}

/// Normalized horizon x channels matrix, stored row-major by lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBlock {
    pub mode: ForecastMode,
    pub values: Vec<f64>,
}

impl ForecastBlock {
    pub fn channels(&self) -> usize {
        self.mode.channels()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn build_block(
    demand: &dyn SeriesView,
    pv: &dyn SeriesView,
    t: usize,
    bands_demand: &ResidualBandTable,
    bands_pv: &ResidualBandTable,
    norm: &Normalizer,
    mode: ForecastMode,
) -> ForecastBlock {
    let mut values = Vec::with_capacity(HORIZON * mode.channels());
    for lead in 1..=HORIZON {
        let target = t + lead;
        // Source strictly in the past: same hour yesterday, or the newest
        // observation while the first day is still warming up.
        let src = if target >= 24 { target - 24 } else { t };
        let month = month_of_index(target);
        let hour = hour_of_index(target);
        let d50 = demand.value_at(src);
        let p50 = pv.value_at(src);
        match mode {
            ForecastMode::One => {
                values.push(norm.z_load(d50));
                values.push(norm.z_pv(p50));
            }
            ForecastMode::All => {
                let (dq10, dq90) = bands_demand.lookup(month, hour);
                let (pq10, pq90) = bands_pv.lookup(month, hour);
                values.push(norm.z_load(d50 + dq10));
                values.push(norm.z_load(d50));
                values.push(norm.z_load(d50 + dq90));
                values.push(norm.z_pv(p50 + pq10));
                values.push(norm.z_pv(p50));
                values.push(norm.z_pv(p50 + pq90));
            }
        }
    }
    ForecastBlock { mode, values }
}

/// Assemble the forecast block at origin `t`. Only indices `<= t` are read;
/// asking for a block whose horizon runs past the series end is an error.
pub fn make_block(
    demand: &dyn SeriesView,
    pv: &dyn SeriesView,
    t: usize,
    bands_demand: &ResidualBandTable,
    bands_pv: &ResidualBandTable,
    norm: &Normalizer,
    mode: ForecastMode,
) -> Result<ForecastBlock> {
    if demand.len() != pv.len() {
        return Err(Error::Shape(format!(
            "demand and pv series lengths differ: {} vs {}",
            demand.len(),
            pv.len()
        )));
    }
    if t + HORIZON >= demand.len() {
        return Err(Error::Horizon(format!(
            "block at t={t} needs horizon through {}, series has {}",
            t + HORIZON,
            demand.len()
        )));
    }
    Ok(build_block(demand, pv, t, bands_demand, bands_pv, norm, mode))
}

/// Planning scalars: hours left until midnight after the current step, and
/// the slack between that and the remaining required runtime. Negative slack
/// signals urgency.
pub fn planning_scalars(hour: u8, run_time: i32) -> (i32, i32) {
    debug_assert!(hour < 24);
    let h_left = 23 - hour as i32;
    (h_left, h_left - run_time)
}

/// Everything the environments need to attach forecast-aware features.
/// Wraps a full-year series and keeps serving blocks across the year-end
/// boundary (the target calendar wraps; data reads never leave the past).
#[derive(Debug, Clone)]
pub struct ForecastContext {
    pub demand: Vec<f64>,
    pub pv: Vec<f64>,
    pub bands_demand: ResidualBandTable,
    pub bands_pv: ResidualBandTable,
    pub norm: Normalizer,
    pub mode: ForecastMode,
}

impl ForecastContext {
    pub fn fit(year: &TimeSeriesYear, train_months: &BTreeSet<u8>, mode: ForecastMode) -> Result<Self> {
        let demand = year.load_series();
        let pv = year.pv_series();
        let bands_demand = fit_bands(&demand, train_months)?;
        let bands_pv = fit_bands(&pv, train_months)?;
        let norm = Normalizer::fit(year, train_months);
        Ok(Self { demand, pv, bands_demand, bands_pv, norm, mode })
    }

    pub fn block_at(&self, t: usize) -> ForecastBlock {
        debug_assert_eq!(self.demand.len(), HOURS_PER_YEAR);
        build_block(
            &self.demand,
            &self.pv,
            t % HOURS_PER_YEAR,
            &self.bands_demand,
            &self.bands_pv,
            &self.norm,
            self.mode,
        )
    }
}

/// Calibration coverage for one (month, hour) bucket on training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketCoverage {
    pub month: u8,
    pub hour: u8,
    pub samples: usize,
    pub frac_below_q10: f64,
    pub frac_above_q90: f64,
    /// Zero-width band: the bucket's residuals are (near-)deterministic and
    /// percentile coverage is not meaningful.
    pub degenerate: bool,
}

/// Empirical residual mass outside the fitted bands, per training bucket.
pub fn coverage_report(
    series: &dyn SeriesView,
    train_months: &BTreeSet<u8>,
    table: &ResidualBandTable,
) -> Vec<BucketCoverage> {
    let mut out = Vec::new();
    for &m in train_months {
        let start = month_start_hour(m);
        let end = (start + month_hours(m)).min(series.len());
        for h in 0..24u8 {
            let (q10, q90) = table.lookup(m, h);
            let mut n = 0usize;
            let mut below = 0usize;
            let mut above = 0usize;
            for t in start.max(24)..end {
                if hour_of_index(t) != h {
                    continue;
                }
                let r = series.value_at(t) - series.value_at(t - 24);
                n += 1;
                if r < q10 {
                    below += 1;
                }
                if r > q90 {
                    above += 1;
                }
            }
            if n == 0 {
                continue;
            }
            out.push(BucketCoverage {
                month: m,
                hour: h,
                samples: n,
                frac_below_q10: below as f64 / n as f64,
                frac_above_q90: above as f64 / n as f64,
                degenerate: q10 == q90,
            });
        }
    }
    out
}

/// Band table CSV: `month,hour,q10_demand,q90_demand,q10_pv,q90_pv`.
pub fn write_bands_csv(
    bands_demand: &ResidualBandTable,
    bands_pv: &ResidualBandTable,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("month,hour,q10_demand,q90_demand,q10_pv,q90_pv\n");
    for &m in &bands_demand.fitted_on {
        for h in 0..24u8 {
            let (dq10, dq90) = bands_demand.lookup(m, h);
            let (pq10, pq90) = bands_pv.lookup(m, h);
            writeln!(out, "{m},{h},{dq10:.6},{dq90:.6},{pq10:.6},{pq90:.6}").unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Normalizer sidecar CSV: `channel,mean,std`.
pub fn write_normalizer_csv(norm: &Normalizer, path: &Path) -> Result<()> {
    let mut out = String::from("channel,mean,std\n");
    for (name, s) in [("load", norm.load), ("pv", norm.pv), ("price", norm.price)] {
        writeln!(out, "{name},{:.6},{:.6}", s.mean, s.std).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use std::cell::Cell;

    fn months(list: &[u8]) -> BTreeSet<u8> {
        list.iter().copied().collect()
    }

    #[test]
    fn seasonal_naive_cases() {
        let constant = vec![3.5; 100];
        for t in [0, 5, 24, 99] {
            assert_eq!(seasonal_naive_p50(&constant, t), 3.5);
        }
        let ramp: Vec<f64> = (0..200).map(|t| t as f64).collect();
        assert_eq!(seasonal_naive_p50(&ramp, 100), 76.0);
        assert_eq!(seasonal_naive_p50(&ramp, 5), 5.0);
    }

    #[test]
    fn constant_series_gives_zero_width_bands() {
        let series = vec![2.0; 1500];
        let table = fit_bands(&series, &months(&[1])).unwrap();
        for h in 0..24 {
            assert_eq!(table.lookup(1, h), (0.0, 0.0));
        }
    }

    #[test]
    fn ramp_series_gives_constant_24_bands() {
        let series: Vec<f64> = (0..1500).map(|t| t as f64).collect();
        let table = fit_bands(&series, &months(&[1])).unwrap();
        for h in 0..24 {
            assert_eq!(table.lookup(1, h), (24.0, 24.0));
        }
    }

    #[test]
    fn percentiles_match_sort_based_oracle() {
        // Residuals enumerating -10..=10 land q10 at -8 and q90 at +8.
        let sorted: Vec<f64> = (-10..=10).map(|v| v as f64).collect();
        assert_eq!(percentile_linear(&sorted, 0.10), -8.0);
        assert_eq!(percentile_linear(&sorted, 0.90), 8.0);

        // And against an independent definition on random data.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(4..60);
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            v.sort_by(f64::total_cmp);
            for p in [0.1, 0.5, 0.9] {
                let pos = p * (n - 1) as f64;
                let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
                let oracle = v[lo] + (pos - lo as f64) * (v[hi] - v[lo]);
                assert!((percentile_linear(&v, p) - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_training_month_is_config_error() {
        let series = vec![1.0; 100]; // ends long before February
        assert!(matches!(
            fit_bands(&series, &months(&[2])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unseen_month_borrows_nearest_fitted_circularly() {
        let year = generate_synthetic(&SyntheticSpec::with_seed(3)).unwrap();
        let series = year.load_series();
        let table = fit_bands(&series, &months(&[1, 7])).unwrap();
        // Month 12 is circularly adjacent to January.
        assert_eq!(table.lookup(12, 5), table.lookup(1, 5));
        // Month 8 is next to July.
        assert_eq!(table.lookup(8, 5), table.lookup(7, 5));
        // Months 4 and 10 are equidistant; ties go to the earlier month.
        assert_eq!(table.lookup(4, 5), table.lookup(1, 5));
        assert_eq!(table.lookup(10, 5), table.lookup(1, 5));
    }

    fn fitted_context(mode: ForecastMode) -> (TimeSeriesYear, ForecastContext) {
        let year = generate_synthetic(&SyntheticSpec::with_seed(3)).unwrap();
        let ctx = ForecastContext::fit(&year, &months(&[1, 7]), mode).unwrap();
        (year, ctx)
    }

    use crate::data::TimeSeriesYear;

    #[test]
    fn block_shapes_per_mode() {
        let (_, ctx_one) = fitted_context(ForecastMode::One);
        assert_eq!(ctx_one.block_at(100).len(), 48);
        let (_, ctx_all) = fitted_context(ForecastMode::All);
        assert_eq!(ctx_all.block_at(100).len(), 144);
    }

    #[test]
    fn constant_series_block_collapses_to_one_value() {
        let demand = vec![4.0; 400];
        let pv = vec![1.0; 400];
        let bands_d = fit_bands(&demand, &months(&[1])).unwrap();
        let bands_p = fit_bands(&pv, &months(&[1])).unwrap();
        let norm = Normalizer {
            load: ChannelStats { mean: 2.0, std: 1.0 },
            pv: ChannelStats { mean: 0.5, std: 1.0 },
            price: ChannelStats { mean: 0.0, std: 1.0 },
            clip_sigma: 5.0,
        };
        let block =
            make_block(&demand, &pv, 50, &bands_d, &bands_p, &norm, ForecastMode::All).unwrap();
        for row in block.values.chunks(6) {
            assert!(row[..3].iter().all(|&v| v == 2.0)); // z-scored constant demand
            assert!(row[3..].iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn normalized_block_never_exceeds_clip() {
        // A spike far outside the training distribution must clip at 5 sigma.
        let mut demand = vec![1.0; 400];
        demand[100] = 1e6;
        let pv = vec![0.0; 400];
        let bands_d = fit_bands(&demand, &months(&[1])).unwrap();
        let bands_p = fit_bands(&pv, &months(&[1])).unwrap();
        let norm = Normalizer {
            load: ChannelStats { mean: 1.0, std: 0.1 },
            pv: ChannelStats { mean: 0.0, std: 0.1 },
            price: ChannelStats { mean: 0.0, std: 1.0 },
            clip_sigma: 5.0,
        };
        let block =
            make_block(&demand, &pv, 110, &bands_d, &bands_p, &norm, ForecastMode::All).unwrap();
        assert!(block.values.iter().all(|v| v.abs() <= 5.0));
        assert!(block.values.iter().any(|v| v.abs() == 5.0));
    }

    #[test]
    fn horizon_past_series_end_is_error() {
        let (_, ctx) = fitted_context(ForecastMode::One);
        let err = make_block(
            &ctx.demand,
            &ctx.pv,
            HOURS_PER_YEAR - 10,
            &ctx.bands_demand,
            &ctx.bands_pv,
            &ctx.norm,
            ForecastMode::One,
        );
        assert!(matches!(err, Err(Error::Horizon(_))));
        // The cyclic context keeps serving year-end blocks.
        assert_eq!(ctx.block_at(HOURS_PER_YEAR - 10).len(), 48);
    }

    struct Tracing<'a> {
        inner: &'a [f64],
        max_seen: Cell<usize>,
    }

    impl SeriesView for Tracing<'_> {
        fn len(&self) -> usize {
            self.inner.len()
        }
        fn value_at(&self, i: usize) -> f64 {
            if i > self.max_seen.get() {
                self.max_seen.set(i);
            }
            self.inner[i]
        }
    }

    #[test]
    fn no_lookahead_reads() {
        let (_, ctx) = fitted_context(ForecastMode::All);
        for t in [0usize, 3, 23, 24, 100, 744, 5000] {
            let d = Tracing { inner: &ctx.demand, max_seen: Cell::new(0) };
            let p = Tracing { inner: &ctx.pv, max_seen: Cell::new(0) };
            make_block(&d, &p, t, &ctx.bands_demand, &ctx.bands_pv, &ctx.norm, ForecastMode::All)
                .unwrap();
            assert!(d.max_seen.get() <= t, "t={t} read demand index {}", d.max_seen.get());
            assert!(p.max_seen.get() <= t, "t={t} read pv index {}", p.max_seen.get());
        }
    }

    #[test]
    fn band_ordering_holds_on_synthetic_data() {
        let (_, ctx) = fitted_context(ForecastMode::All);
        for &m in &ctx.bands_demand.fitted_on {
            for h in 0..24 {
                let (q10, q90) = ctx.bands_demand.lookup(m, h);
                assert!(q10 <= q90);
                // On unbiased seasonal-naive residuals the bands straddle zero,
                // which is what keeps p10 <= p50 <= p90 before normalization.
                assert!(q10 <= 0.0 && q90 >= 0.0, "month {m} hour {h}: ({q10}, {q90})");
            }
        }
    }

    #[test]
    fn coverage_close_to_ten_percent_per_side() {
        let (_, ctx) = fitted_context(ForecastMode::All);
        let table = &ctx.bands_demand;
        let report = coverage_report(&ctx.demand, &months(&[1, 7]), table);
        assert!(!report.is_empty());
        for b in report.iter().filter(|b| b.samples >= 20 && !b.degenerate) {
            assert!(
                (0.05..=0.15).contains(&b.frac_below_q10),
                "month {} hour {}: below {}",
                b.month,
                b.hour,
                b.frac_below_q10
            );
            assert!(
                (0.05..=0.15).contains(&b.frac_above_q90),
                "month {} hour {}: above {}",
                b.month,
                b.hour,
                b.frac_above_q90
            );
        }
    }

    #[test]
    fn normalizer_ignores_test_months() {
        let year = generate_synthetic(&SyntheticSpec::with_seed(3)).unwrap();
        let norm_a = Normalizer::fit(&year, &months(&[1, 7]));
        let mut tampered = year.clone();
        // February is a test month; rewriting it must not move the stats.
        for r in tampered.records.iter_mut().filter(|r| r.month == 2) {
            r.load_kw = 999.0;
            r.pv_kw = 999.0;
            r.price = 9.0;
        }
        let norm_b = Normalizer::fit(&tampered, &months(&[1, 7]));
        assert_eq!(norm_a, norm_b);
    }

    #[test]
    fn planning_scalar_cases() {
        assert_eq!(planning_scalars(18, 2), (5, 3));
        assert_eq!(planning_scalars(23, 0), (0, 0));
        let (h_left, slack) = planning_scalars(20, 7);
        assert_eq!(h_left, 3);
        assert!(slack < 0, "urgency must show as negative slack");
    }

    #[test]
    fn bands_csv_round_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let (_, ctx) = fitted_context(ForecastMode::All);
        let bands = dir.path().join("bands.csv");
        write_bands_csv(&ctx.bands_demand, &ctx.bands_pv, &bands).unwrap();
        let text = std::fs::read_to_string(&bands).unwrap();
        assert!(text.starts_with("month,hour,q10_demand"));
        assert_eq!(text.lines().count(), 1 + 2 * 24);

        let normf = dir.path().join("norm.csv");
        write_normalizer_csv(&ctx.norm, &normf).unwrap();
        let text = std::fs::read_to_string(&normf).unwrap();
        assert_eq!(text.lines().count(), 4);
    }
}
