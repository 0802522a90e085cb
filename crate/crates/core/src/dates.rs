//! Calendar helpers shared by the cohort, split and feature code.

use chrono::{Datelike, Months, NaiveDate};

use crate::error::{Error, Result};

pub fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_add_months(Months::new(months))
        .expect("date arithmetic out of range")
}

pub fn sub_months(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_sub_months(Months::new(months))
        .expect("date arithmetic out of range")
}

pub fn add_days(date: NaiveDate, days: i64) -> NaiveDate {
    date + chrono::Duration::days(days)
}

/// Signed number of days from `from` to `to`.
pub fn days_between(from: NaiveDate, to: NaiveDate) -> i64 {
    (to - from).num_days()
}

/// Whole years elapsed between `birth` and `on` (calendar age).
pub fn age_in_years(birth: NaiveDate, on: NaiveDate) -> i64 {
    let mut years = i64::from(on.year() - birth.year());
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    years
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Parse(format!("bad date `{s}`: {e}")))
}

pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_arithmetic_clamps_to_month_end() {
        assert_eq!(add_months(ymd(2019, 1, 31), 1), ymd(2019, 2, 28));
        assert_eq!(sub_months(ymd(2019, 1, 1), 12), ymd(2018, 1, 1));
    }

    #[test]
    fn age_counts_completed_years() {
        assert_eq!(age_in_years(ymd(2000, 3, 1), ymd(2019, 2, 28)), 18);
        assert_eq!(age_in_years(ymd(2000, 3, 1), ymd(2019, 3, 1)), 19);
    }
}
