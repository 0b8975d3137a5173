//! Evaluation metrics: per-run reports with monthly aggregates, hour-of-day
//! peak profiles, run-time satisfaction, and an exact Wilcoxon signed-rank
//! test for paired monthly comparisons.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{HourRange, SplitSpec};
use crate::error::{Error, Result};
use crate::heater::DayLedger;

/// One evaluated hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub index: usize,
    pub month: u8,
    pub hour: u8,
    pub grid_import_kwh: f64,
    /// Import the farm would have drawn with no controllable device.
    pub baseline_import_kwh: f64,
    pub price: f64,
    pub cost: f64,
    pub soc: Option<f64>,
    pub device_on: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyAgg {
    pub month: u8,
    pub import_kwh: f64,
    pub baseline_import_kwh: f64,
    pub cost: f64,
    pub baseline_cost: f64,
    /// Peak of the month's mean hour-of-day import profile (kW).
    pub peak_kw: f64,
    pub baseline_peak_kw: f64,
    /// Fraction of days meeting the run-time requirement (heater runs only).
    pub satisfaction: Option<f64>,
}

/// Everything one evaluation run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub agent: String,
    pub env: String,
    pub seed: u64,
    pub split: SplitSpec,
    pub hourly: Vec<HourRecord>,
    pub ledgers: Vec<DayLedger>,
    pub monthly: Vec<MonthlyAgg>,
    /// Fraction of ON-hours inside the preferred windows (heater runs only).
    pub window_adherence: Option<f64>,
}

/// Mean import per hour-of-day over a set of hours (kW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakProfile(pub [f64; 24]);

impl PeakProfile {
    pub fn from_hours<'a>(hours: impl Iterator<Item = (&'a u8, f64)>) -> Self {
        let mut sums = [0.0f64; 24];
        let mut counts = [0usize; 24];
        for (h, v) in hours {
            sums[*h as usize] += v;
            counts[*h as usize] += 1;
        }
        let mut out = [0.0; 24];
        for h in 0..24 {
            if counts[h] > 0 {
                out[h] = sums[h] / counts[h] as f64;
            }
        }
        PeakProfile(out)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl RunReport {
    /// Build a report and its monthly aggregates; aggregation is re-summed
    /// and cross-checked on construction.
    pub fn new(
        agent: &str,
        env: &str,
        seed: u64,
        split: SplitSpec,
        hourly: Vec<HourRecord>,
        ledgers: Vec<DayLedger>,
        desired_windows: Option<&[HourRange]>,
    ) -> Result<Self> {
        let mut months: Vec<u8> = hourly.iter().map(|h| h.month).collect();
        months.sort_unstable();
        months.dedup();

        let mut monthly = Vec::with_capacity(months.len());
        for m in months {
            let rows: Vec<&HourRecord> = hourly.iter().filter(|h| h.month == m).collect();
            let import_kwh: f64 = rows.iter().map(|h| h.grid_import_kwh).sum();
            let baseline_import_kwh: f64 = rows.iter().map(|h| h.baseline_import_kwh).sum();
            let cost: f64 = rows.iter().map(|h| h.cost).sum();
            let baseline_cost: f64 = rows.iter().map(|h| h.price * h.baseline_import_kwh).sum();
            let profile =
                PeakProfile::from_hours(rows.iter().map(|h| (&h.hour, h.grid_import_kwh)));
            let base_profile =
                PeakProfile::from_hours(rows.iter().map(|h| (&h.hour, h.baseline_import_kwh)));
            let month_days: Vec<&DayLedger> = ledgers
                .iter()
                .filter(|l| {
                    crate::calendar::month_of_index(l.day_index * 24) == m
                })
                .collect();
            let satisfaction = if month_days.is_empty() {
                None
            } else {
                Some(
                    month_days.iter().filter(|l| l.met).count() as f64 / month_days.len() as f64,
                )
            };
            monthly.push(MonthlyAgg {
                month: m,
                import_kwh,
                baseline_import_kwh,
                cost,
                baseline_cost,
                peak_kw: profile.max(),
                baseline_peak_kw: base_profile.max(),
                satisfaction,
            });
        }

        // Aggregates must re-sum to the hourly members.
        let total_hourly: f64 = hourly.iter().map(|h| h.grid_import_kwh).sum();
        let total_monthly: f64 = monthly.iter().map(|m| m.import_kwh).sum();
        if (total_hourly - total_monthly).abs() > 1e-6 * total_hourly.abs().max(1.0) {
            return Err(Error::Validation(format!(
                "monthly aggregates ({total_monthly}) do not re-sum to hourly imports ({total_hourly})"
            )));
        }

        let window_adherence = desired_windows.map(|windows| {
            let on_hours: Vec<&HourRecord> =
                hourly.iter().filter(|h| h.device_on == Some(true)).collect();
            if on_hours.is_empty() {
                1.0
            } else {
                on_hours
                    .iter()
                    .filter(|h| windows.iter().any(|w| w.contains(h.hour)))
                    .count() as f64
                    / on_hours.len() as f64
            }
        });

        Ok(Self {
            agent: agent.to_string(),
            env: env.to_string(),
            seed,
            split,
            hourly,
            ledgers,
            monthly,
            window_adherence,
        })
    }

    pub fn total_import_kwh(&self) -> f64 {
        self.hourly.iter().map(|h| h.grid_import_kwh).sum()
    }

    pub fn total_baseline_import_kwh(&self) -> f64 {
        self.hourly.iter().map(|h| h.baseline_import_kwh).sum()
    }

    pub fn peak_profile(&self) -> PeakProfile {
        PeakProfile::from_hours(self.hourly.iter().map(|h| (&h.hour, h.grid_import_kwh)))
    }

    pub fn baseline_peak_profile(&self) -> PeakProfile {
        PeakProfile::from_hours(self.hourly.iter().map(|h| (&h.hour, h.baseline_import_kwh)))
    }
}

/// Total billed cost: the sum of hourly price x import.
pub fn total_cost(report: &RunReport) -> f64 {
    report.hourly.iter().map(|h| h.cost).sum()
}

/// Relative drop of the profile maximum; negative when the scheduled profile
/// peaks higher than the base.
pub fn peak_reduction(base: &PeakProfile, scheduled: &PeakProfile) -> Result<f64> {
    let base_max = base.max();
    if base_max == 0.0 {
        return Err(Error::Degenerate("base profile peak is zero".into()));
    }
    Ok((base_max - scheduled.max()) / base_max)
}

/// Fraction of settled days whose run-time landed exactly on zero.
pub fn satisfaction_rate(ledgers: &[DayLedger]) -> Result<f64> {
    if ledgers.is_empty() {
        return Err(Error::Degenerate("no settled days".into()));
    }
    Ok(ledgers.iter().filter(|l| l.met).count() as f64 / ledgers.len() as f64)
}

/// Ranks of |values| with average ranks on ties, doubled so they stay
/// integral (the average of two integers is a half-integer).
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let n = abs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average rank; doubled it is
        // (i+1 + j+1) since rank_avg = (i+1 + j+1)/2.
        let doubled = (i as u64 + 1) + (j as u64 + 1);
        for &idx in &order[i..=j] {
            ranks2[idx] = doubled;
        }
        i = j + 1;
    }
    ranks2
}

/// Exact tail mass P(T <= target) of the null rank-sum distribution, where T
/// sums a random subset of the doubled ranks. Dynamic programming over sums
/// is an exact reformulation of enumerating all 2^n sign assignments.
fn exact_cdf(ranks2: &[u64], target: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in ranks2 {
        for s in (r..=total).rev() {
            let add = counts[(s - r) as usize];
            if add > 0 {
                counts[s as usize] += add;
            }
        }
    }
    let below: u64 = counts[..=(target.min(total)) as usize].iter().sum();
    below as f64 / 2f64.powi(ranks2.len() as i32)
}

fn normal_cdf(z: f64) -> f64 {
    // Abramowitz & Stegun 7.1.26 rational approximation of erf.
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let erf = if x >= 0.0 { erf } else { -erf };
    0.5 * (1.0 + erf)
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zeros are dropped; |differences| are ranked with average ranks on ties.
/// Returns (W, p) where W = min(W+, W-). For n <= 25 the p-value is exact
/// (full sign enumeration via the rank-sum distribution); beyond that a
/// normal approximation with continuity and tie corrections is used.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<(f64, f64)> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate(
            "all paired differences are zero; the test is undefined".into(),
        ));
    }
    let n = nonzero.len();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_ranks(&abs);
    let w_plus2: u64 = nonzero
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let w_min2 = w_plus2.min(w_minus2);
    let w_stat = w_min2 as f64 / 2.0;

    let p = if n <= 25 {
        (2.0 * exact_cdf(&ranks2, w_min2)).min(1.0)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // Tie correction: sum over tie groups of (t^3 - t) / 48.
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += (t * t * t - t) / 48.0;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let z = (w_stat - mean + 0.5) / var.sqrt();
        (2.0 * normal_cdf(z)).min(1.0)
    };
    Ok((w_stat, p))
}

/// Median of a sample (average of the two central order statistics).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `monthly.csv`: month, import_kwh, cost, peak_kw, satisfaction.
pub fn write_monthly_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut out = String::from("month,import_kwh,cost,peak_kw,satisfaction\n");
    for m in &report.monthly {
        let sat = match m.satisfaction {
            Some(s) => format!("{s:.4}"),
            None => String::new(),
        };
        writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{}",
            m.month, m.import_kwh, m.cost, m.peak_kw, sat
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `profile.csv`: hour, base_kw, scheduled_kw (mean hour-of-day imports).
pub fn write_profile_csv(report: &RunReport, path: &Path) -> Result<()> {
    let base = report.baseline_peak_profile();
    let sched = report.peak_profile();
    let mut out = String::from("hour,base_kw,scheduled_kw\n");
    for h in 0..24 {
        writeln!(out, "{h},{:.4},{:.4}", base.0[h], sched.0[h]).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hour(index: usize, month: u8, h: u8, import: f64, price: f64) -> HourRecord {
        HourRecord {
            index,
            month,
            hour: h,
            grid_import_kwh: import,
            baseline_import_kwh: import,
            price,
            cost: price * import,
            soc: None,
            device_on: None,
        }
    }

    fn report(hours: Vec<HourRecord>) -> RunReport {
        RunReport::new(
            "test",
            "battery",
            0,
            SplitSpec::battery_default(),
            hours,
            Vec::new(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn total_cost_cases() {
        assert_eq!(total_cost(&report(vec![hour(0, 2, 0, 0.0, 0.3)])), 0.0);
        let r = report(vec![hour(0, 2, 0, 2.0, 0.3), hour(1, 2, 1, 5.0, 0.1)]);
        assert!((total_cost(&r) - 1.10).abs() < 1e-12);
    }

    #[test]
    fn total_cost_is_additive_over_partitions() {
        let hours: Vec<HourRecord> = (0..48)
            .map(|i| hour(i, if i < 24 { 2 } else { 3 }, (i % 24) as u8, i as f64 * 0.1, 0.2))
            .collect();
        let whole = total_cost(&report(hours.clone()));
        let first = total_cost(&report(hours[..24].to_vec()));
        let second = total_cost(&report(hours[24..].to_vec()));
        assert!((whole - (first + second)).abs() < 1e-9);
    }

    #[test]
    fn peak_reduction_cases() {
        let mut base = [0.0; 24];
        base[8] = 30.0;
        let mut sched = [0.0; 24];
        sched[8] = 25.875;
        let r = peak_reduction(&PeakProfile(base), &PeakProfile(sched)).unwrap();
        assert!((r - 0.1375).abs() < 1e-12);

        let same = peak_reduction(&PeakProfile(base), &PeakProfile(base)).unwrap();
        assert_eq!(same, 0.0);

        let mut worse = [0.0; 24];
        worse[9] = 40.0;
        assert!(peak_reduction(&PeakProfile(base), &PeakProfile(worse)).unwrap() < 0.0);

        assert!(matches!(
            peak_reduction(&PeakProfile([0.0; 24]), &PeakProfile(sched)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn peak_reduction_scale_invariant() {
        let mut base = [1.0; 24];
        base[7] = 12.0;
        let mut sched = [0.5; 24];
        sched[19] = 9.0;
        let a = peak_reduction(&PeakProfile(base), &PeakProfile(sched)).unwrap();
        let base3 = PeakProfile(base.map(|v| v * 3.0));
        let sched3 = PeakProfile(sched.map(|v| v * 3.0));
        let b = peak_reduction(&base3, &sched3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    fn ledger(day: usize, end: i32) -> DayLedger {
        DayLedger {
            day_index: day,
            on_hours_taken: 3 - end,
            run_time_end_of_day: end,
            met: end == 0,
        }
    }

    #[test]
    fn satisfaction_cases() {
        let mut days: Vec<DayLedger> = (0..99).map(|d| ledger(d, 0)).collect();
        days.push(ledger(99, 1));
        assert!((satisfaction_rate(&days).unwrap() - 0.99).abs() < 1e-12);

        let all_met: Vec<DayLedger> = (0..10).map(|d| ledger(d, 0)).collect();
        assert_eq!(satisfaction_rate(&all_met).unwrap(), 1.0);

        // Overuse (negative end-of-day run-time) counts as unmet.
        let overuse = vec![ledger(0, -1)];
        assert_eq!(satisfaction_rate(&overuse).unwrap(), 0.0);

        assert!(satisfaction_rate(&[]).is_err());
    }

    #[test]
    fn wilcoxon_all_positive_n10() {
        let diffs: Vec<f64> = (1..=10).map(|d| d as f64).collect();
        let (w, p) = wilcoxon_signed_rank(&diffs).unwrap();
        assert_eq!(w, 0.0);
        assert_eq!(p, 0.001953125);
    }

    #[test]
    fn wilcoxon_symmetric_pair() {
        let (_, p) = wilcoxon_signed_rank(&[1.0, -1.0]).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn wilcoxon_zero_only_is_degenerate() {
        assert!(matches!(
            wilcoxon_signed_rank(&[0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn wilcoxon_negation_symmetry_and_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.gen_range(1..15);
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    let v: f64 = rng.gen_range(-5.0..5.0);
                    (v * 4.0).round() / 4.0 // induce ties
                })
                .collect();
            if diffs.iter().all(|d| *d == 0.0) {
                continue;
            }
            let (_, p) = wilcoxon_signed_rank(&diffs).unwrap();
            let negated: Vec<f64> = diffs.iter().map(|d| -d).collect();
            let (_, p_neg) = wilcoxon_signed_rank(&negated).unwrap();
            assert_eq!(p, p_neg);
            assert!(p > 0.0 && p <= 1.0);
        }
    }

    #[test]
    fn wilcoxon_large_n_uses_normal_tail() {
        let diffs: Vec<f64> = (1..=40).map(|d| d as f64).collect();
        let (w, p) = wilcoxon_signed_rank(&diffs).unwrap();
        assert_eq!(w, 0.0);
        assert!(p < 1e-6, "all-positive n=40 should be overwhelmingly significant, p={p}");
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn monthly_aggregates_resum() {
        let hours: Vec<HourRecord> =
            (0..72).map(|i| hour(744 + i, 2, (i % 24) as u8, 1.5, 0.2)).collect();
        let r = report(hours);
        assert_eq!(r.monthly.len(), 1);
        assert!((r.monthly[0].import_kwh - 108.0).abs() < 1e-9);
        assert!((r.monthly[0].peak_kw - 1.5).abs() < 1e-12);
    }
}
