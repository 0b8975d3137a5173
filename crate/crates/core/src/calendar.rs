//! Fixed non-leap calendar used everywhere: 8760 hours, months addressed 1..=12.
//!
//! One step is one hour, so a kW reading over a step equals kWh.

/// Hours in the fixed non-leap year.
pub const HOURS_PER_YEAR: usize = 8760;

/// Days per month, January first.
pub const DAYS_PER_MONTH: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Year stamped on generated CSV files. Ingested files may use any non-leap year.
pub const SYNTHETIC_YEAR: u32 = 2023;

/// First hour-of-year index of each month (1-based month).
pub fn month_start_hour(month: u8) -> usize {
    debug_assert!((1..=12).contains(&month));
    DAYS_PER_MONTH[..month as usize - 1].iter().sum::<usize>() * 24
}

/// Number of hours in a month.
pub fn month_hours(month: u8) -> usize {
    DAYS_PER_MONTH[month as usize - 1] * 24
}

/// Month (1..=12) containing an hour-of-year index. Indexes past the year wrap.
pub fn month_of_index(index: usize) -> u8 {
    let index = index % HOURS_PER_YEAR;
    let mut m = 1u8;
    while m < 12 && index >= month_start_hour(m + 1) {
        m += 1;
    }
    m
}

/// Day-of-month (1-based) for an hour-of-year index.
pub fn day_of_month(index: usize) -> usize {
    let index = index % HOURS_PER_YEAR;
    (index - month_start_hour(month_of_index(index))) / 24 + 1
}

/// Hour-of-day (0..24) for an hour-of-year index.
pub fn hour_of_index(index: usize) -> u8 {
    (index % 24) as u8
}

/// Hour-of-year index for (month, day, hour). Panics on out-of-range input.
pub fn index_of(month: u8, day: usize, hour: u8) -> usize {
    assert!((1..=12).contains(&month) && day >= 1 && day <= DAYS_PER_MONTH[month as usize - 1]);
    month_start_hour(month) + (day - 1) * 24 + hour as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_boundaries() {
        assert_eq!(month_start_hour(1), 0);
        assert_eq!(month_start_hour(2), 744);
        assert_eq!(month_start_hour(12), 8016);
        assert_eq!(month_hours(1), 744);
        assert_eq!(month_hours(2), 672);
        assert_eq!(month_start_hour(12) + month_hours(12), HOURS_PER_YEAR);
    }

    #[test]
    fn index_round_trip() {
        for &i in &[0usize, 743, 744, 4343, 4344, 8759] {
            let m = month_of_index(i);
            let d = day_of_month(i);
            let h = hour_of_index(i);
            assert_eq!(index_of(m, d, h), i);
        }
    }

    #[test]
    fn wraps_past_year_end() {
        assert_eq!(month_of_index(HOURS_PER_YEAR), 1);
        assert_eq!(hour_of_index(HOURS_PER_YEAR + 5), 5);
    }
}
