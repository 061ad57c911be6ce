//! Reservation, airport, holiday and route tables.
//!
//! Real feeds and the synthetic generator share one CSV schema, so
//! everything downstream of this module is agnostic to where the data came
//! from.

mod aggregate;
mod csv_io;
mod generator;
mod geo;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use aggregate::aggregate_legs;
pub use csv_io::{
    load_airports, load_holidays, load_reservations, load_routes, write_airports,
    write_holidays, write_reservations, write_routes,
};
pub use generator::{generate_synthetic, GeneratorConfig, SyntheticCorpus};
pub use geo::{route_distance, EARTH_RADIUS_KM};

/// Snapshots are recorded from this many days before departure.
pub const MAX_DAYS_BEFORE_DEPARTURE: u32 = 30;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file} row {row}: bad date: {detail}")]
    BadDate { file: String, row: usize, detail: String },
    #[error("{file} row {row}: negative seat count in `{column}`")]
    NegativeSeats { file: String, row: usize, column: String },
    #[error("{file} row {row}: zero total seats")]
    ZeroCapacity { file: String, row: usize },
    #[error("{file} row {row}: cannot parse `{column}`: {detail}")]
    BadValue { file: String, row: usize, column: String, detail: String },
    #[error("legs of {route_id} on {flight_date} (record {record_date}) disagree on aircraft: {first} vs {second}")]
    ConflictingAircraft {
        route_id: String,
        flight_date: NaiveDate,
        record_date: NaiveDate,
        first: String,
        second: String,
    },
    #[error("route {route_id} references unknown airport {iata}")]
    UnknownAirport { route_id: String, iata: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One daily observation of a flight's booking state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingSnapshot {
    pub route_id: String,
    pub flight_date: NaiveDate,
    pub record_date: NaiveDate,
    pub days_before_departure: u32,
    pub booked_seats: u32,
    pub total_seats: u32,
    pub aircraft_type: String,
}

impl BookingSnapshot {
    /// Builds a snapshot, deriving `days_before_departure` from the dates.
    /// Returns `None` when the record date falls after the flight date.
    pub fn new(
        route_id: impl Into<String>,
        flight_date: NaiveDate,
        record_date: NaiveDate,
        booked_seats: u32,
        total_seats: u32,
        aircraft_type: impl Into<String>,
    ) -> Option<Self> {
        let d = (flight_date - record_date).num_days();
        if d < 0 {
            return None;
        }
        Some(Self {
            route_id: route_id.into(),
            flight_date,
            record_date,
            days_before_departure: d as u32,
            booked_seats,
            total_seats,
            aircraft_type: aircraft_type.into(),
        })
    }

    /// Raw feeds may carry more bookings than seats; those rows are kept.
    pub fn is_overbooked(&self) -> bool {
        self.booked_seats > self.total_seats
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Airport {
    pub iata: String,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    pub dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }
}

impl FromIterator<NaiveDate> for HolidayCalendar {
    fn from_iter<I: IntoIterator<Item = NaiveDate>>(iter: I) -> Self {
        Self { dates: iter.into_iter().collect() }
    }
}

macro_rules! tag_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} tag `{}`", stringify!($name), other)),
                }
            }
        }
    };
}

tag_enum!(Reach { Domestic => "domestic", International => "international" });
tag_enum!(Service { Direct => "direct", Transit => "transit" });
tag_enum!(Frequency { HighFreq => "high_freq", LowFreq => "low_freq" });
tag_enum!(Haul { Short => "short", Mid => "mid", Long => "long" });

/// Routes flown at least this many times a week are tagged `high_freq`.
pub const HIGH_FREQUENCY_THRESHOLD: u32 = 7;

impl Frequency {
    pub fn from_weekly(weekly_frequency: u32) -> Self {
        if weekly_frequency >= HIGH_FREQUENCY_THRESHOLD {
            Frequency::HighFreq
        } else {
            Frequency::LowFreq
        }
    }
}

/// The four category pairs every route is tagged with exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTags {
    pub reach: Reach,
    pub service: Service,
    pub frequency: Frequency,
    pub haul: Haul,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteMeta {
    pub route_id: String,
    pub origin: String,
    pub destination: String,
    pub distance_km: f64,
    pub weekly_frequency: u32,
    pub tags: RouteTags,
}
