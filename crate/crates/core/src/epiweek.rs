//! Epidemiological week calendar: Sunday-to-Saturday weeks, week 1 being the
//! first week with at least four days in the new year.

use chrono::{Datelike, Days, NaiveDate, Weekday};

/// First day (a Sunday) of epidemiological week 1 of `year`.
pub fn first_day_of_year(year: i32) -> NaiveDate {
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    let back = jan1.weekday().num_days_from_sunday();
    let sunday = jan1 - Days::new(u64::from(back));
    // Sunday..Saturday containing Jan 1 keeps >= 4 days of the year iff
    // Jan 1 falls Sunday..Wednesday.
    if back <= 3 {
        sunday
    } else {
        sunday + Days::new(7)
    }
}

/// Number of epidemiological weeks in `year` (52 or 53).
pub fn weeks_in_year(year: i32) -> u8 {
    let span = first_day_of_year(year + 1) - first_day_of_year(year);
    (span.num_days() / 7) as u8
}

/// The (epidemiological year, week) containing `date`.
pub fn epi_week(date: NaiveDate) -> (i32, u8) {
    let mut year = date.year() + 1;
    while date < first_day_of_year(year) {
        year -= 1;
    }
    let week = (date - first_day_of_year(year)).num_days() / 7 + 1;
    (year, week as u8)
}

/// Calendar dates of the given epidemiological week, Sunday first.
pub fn week_dates(year: i32, week: u8) -> Option<[NaiveDate; 7]> {
    if week == 0 || week > weeks_in_year(year) {
        return None;
    }
    let start = first_day_of_year(year) + Days::new(7 * u64::from(week - 1));
    debug_assert_eq!(start.weekday(), Weekday::Sun);
    Some(std::array::from_fn(|i| start + Days::new(i as u64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn year_boundaries_2020_2021() {
        assert_eq!(first_day_of_year(2020), d(2019, 12, 29));
        assert_eq!(weeks_in_year(2020), 53);
        assert_eq!(epi_week(d(2021, 1, 1)), (2020, 53));
        assert_eq!(epi_week(d(2021, 1, 2)), (2020, 53));
        assert_eq!(epi_week(d(2021, 1, 3)), (2021, 1));
        assert_eq!(epi_week(d(2019, 12, 29)), (2020, 1));
        assert_eq!(epi_week(d(2020, 2, 16)), (2020, 8));
        assert_eq!(epi_week(d(2021, 4, 24)), (2021, 16));
    }

    /// Brute force: walk every day, advancing the week on Sundays, and check
    /// week 1 of each year holds at least four days of that year.
    #[test]
    fn matches_day_walk() {
        let mut date = d(2015, 1, 4); // week 1 of 2015 starts on this Sunday
        let (mut year, mut week) = (2015, 1u8);
        while date < d(2026, 1, 1) {
            if date.weekday() == Weekday::Sun && date != d(2015, 1, 4) {
                let next_sat = date + Days::new(6);
                // the new week starts a new year when most of it lies in it
                let days_in_next_year = (0..7)
                    .filter(|i| (date + Days::new(*i)).year() == next_sat.year())
                    .count();
                if next_sat.year() > year && days_in_next_year >= 4 {
                    year = next_sat.year();
                    week = 1;
                } else {
                    week += 1;
                }
            }
            assert_eq!(epi_week(date), (year, week), "{date}");
            date = date + Days::new(1);
        }
    }

    #[test]
    fn week_dates_round_trip() {
        for year in 2019..=2022 {
            for week in 1..=weeks_in_year(year) {
                for day in week_dates(year, week).unwrap() {
                    assert_eq!(epi_week(day), (year, week));
                }
            }
            assert!(week_dates(year, weeks_in_year(year) + 1).is_none());
        }
    }
}
