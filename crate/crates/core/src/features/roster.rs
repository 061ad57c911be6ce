//! The fixed roster of 39 candidate features.
//!
//! Order matters: it is the column order of `features.csv` and doubles as
//! the domain-priority ranking used when the correlation prune has to pick
//! which of two redundant features to drop (lower index wins). The twelve
//! distinct features of the default final selection come first.

use serde::{Deserialize, Serialize};

pub const FEATURE_COUNT: usize = 39;

/// Which sequence stream a candidate may feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Eligibility {
    Horizontal,
    Vertical,
    Both,
}

impl Eligibility {
    pub fn horizontal(self) -> bool {
        matches!(self, Eligibility::Horizontal | Eligibility::Both)
    }

    pub fn vertical(self) -> bool {
        matches!(self, Eligibility::Vertical | Eligibility::Both)
    }
}

use Eligibility::{Both, Horizontal as H, Vertical as V};

pub const ROSTER: [(&str, Eligibility); FEATURE_COUNT] = [
    ("plf", Both),
    ("total_RPK", Both),
    ("rolling_avg_plf", Both),
    ("plf_historical", Both),
    ("days_before_departure", Both),
    ("record_date_day", H),
    ("record_date_day_of_year", H),
    ("flight_date_is_holiday", Both),
    ("flight_date_day", V),
    ("flight_date_week", V),
    ("flight_date_day_of_year", V),
    ("flight_date_is_weekend", V),
    // companions
    ("total_ASK", Both),
    ("booked_seats", Both),
    ("total_seats", V),
    ("distance_km", V),
    ("flight_date_month", V),
    ("record_date_month", H),
    ("record_date_week", H),
    ("flight_date_dow", V),
    ("record_date_dow", H),
    ("record_date_is_holiday", H),
    ("record_date_is_weekend", H),
    ("flight_date_dow_sin", V),
    ("flight_date_dow_cos", V),
    ("flight_date_month_sin", V),
    ("flight_date_month_cos", V),
    ("flight_date_dom_sin", V),
    ("flight_date_dom_cos", V),
    ("flight_date_woy_sin", V),
    ("flight_date_woy_cos", V),
    ("record_date_dow_sin", H),
    ("record_date_dow_cos", H),
    ("record_date_month_sin", H),
    ("record_date_month_cos", H),
    ("record_date_dom_sin", H),
    ("record_date_dom_cos", H),
    ("record_date_woy_sin", H),
    ("record_date_woy_cos", H),
];

/// Index of each roster entry, for readable access in the builders.
pub mod idx {
    pub const PLF: usize = 0;
    pub const TOTAL_RPK: usize = 1;
    pub const ROLLING_AVG_PLF: usize = 2;
    pub const PLF_HISTORICAL: usize = 3;
    pub const DAYS_BEFORE_DEPARTURE: usize = 4;
    pub const RECORD_DATE_DAY: usize = 5;
    pub const RECORD_DATE_DAY_OF_YEAR: usize = 6;
    pub const FLIGHT_DATE_IS_HOLIDAY: usize = 7;
    pub const FLIGHT_DATE_DAY: usize = 8;
    pub const FLIGHT_DATE_WEEK: usize = 9;
    pub const FLIGHT_DATE_DAY_OF_YEAR: usize = 10;
    pub const FLIGHT_DATE_IS_WEEKEND: usize = 11;
    pub const TOTAL_ASK: usize = 12;
    pub const BOOKED_SEATS: usize = 13;
    pub const TOTAL_SEATS: usize = 14;
    pub const DISTANCE_KM: usize = 15;
    pub const FLIGHT_DATE_MONTH: usize = 16;
    pub const RECORD_DATE_MONTH: usize = 17;
    pub const RECORD_DATE_WEEK: usize = 18;
    pub const FLIGHT_DATE_DOW: usize = 19;
    pub const RECORD_DATE_DOW: usize = 20;
    pub const RECORD_DATE_IS_HOLIDAY: usize = 21;
    pub const RECORD_DATE_IS_WEEKEND: usize = 22;
    /// First of the sixteen sin/cos columns (flight date, then record date).
    pub const CYCLIC_START: usize = 23;
}

/// Sin/cos column pairs as (sin index, cos index).
pub fn cyclic_pairs() -> impl Iterator<Item = (usize, usize)> {
    (0..8).map(|k| (idx::CYCLIC_START + 2 * k, idx::CYCLIC_START + 2 * k + 1))
}

pub fn feature_names() -> impl Iterator<Item = &'static str> {
    ROSTER.iter().map(|(n, _)| *n)
}

pub fn feature_index(name: &str) -> Option<usize> {
    ROSTER.iter().position(|(n, _)| *n == name)
}

pub fn eligibility(index: usize) -> Eligibility {
    ROSTER[index].1
}

/// Features present in both streams of the default final selection.
pub const SHARED_CORE: [&str; 5] =
    ["plf", "total_RPK", "rolling_avg_plf", "plf_historical", "days_before_departure"];

/// The 8 horizontal columns of the default selection.
pub const TABLE_HORIZONTAL: [&str; 8] = [
    "plf",
    "total_RPK",
    "rolling_avg_plf",
    "plf_historical",
    "days_before_departure",
    "record_date_day",
    "record_date_day_of_year",
    "flight_date_is_holiday",
];

/// The 9 vertical columns of the default selection. `flight_date_week` is
/// left out as it is nearly collinear with `flight_date_day_of_year`.
pub const TABLE_VERTICAL: [&str; 9] = [
    "plf",
    "total_RPK",
    "rolling_avg_plf",
    "plf_historical",
    "days_before_departure",
    "flight_date_is_holiday",
    "flight_date_day",
    "flight_date_day_of_year",
    "flight_date_is_weekend",
];
