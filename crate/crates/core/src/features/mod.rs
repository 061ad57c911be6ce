//! Feature engineering: load-factor KPIs, calendar encodings, holiday and
//! weekend flags, and rolling/historical PLF statistics.
//!
//! PLF is carried in percentage points throughout.

mod io;
pub mod roster;

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::ingest::{BookingSnapshot, HolidayCalendar, RouteMeta};
pub use io::{read_features_csv, write_features_csv};
pub use roster::{feature_index, feature_names, Eligibility, FEATURE_COUNT, ROSTER};
use roster::idx;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("total seats is zero")]
    ZeroCapacity,
    #[error("snapshot references unknown route `{0}`")]
    UnknownRoute(String),
    #[error("features.csv: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Trailing window (in snapshots of the same flight) of `rolling_avg_plf`.
    pub rolling_window: usize,
    /// Days counted as weekend. Defaults to Friday and Saturday.
    pub weekend: Vec<Weekday>,
    /// Clip PLF at 100 for overbooked snapshots.
    pub clip_plf: bool,
    /// `plf_historical` when no earlier flight exists anywhere in the corpus.
    pub cold_start_plf: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            rolling_window: 7,
            weekend: vec![Weekday::Fri, Weekday::Sat],
            clip_plf: false,
            cold_start_plf: 50.0,
        }
    }
}

/// Which fallback tier produced a row's `plf_historical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryTier {
    /// Earlier flights of the same route at the same days-before-departure.
    RouteDay,
    /// Earlier flights of the same route at any offset.
    Route,
    /// Earlier flights of any route.
    Global,
    /// Nothing earlier exists; the configured cold-start value.
    ColdStart,
}

impl HistoryTier {
    pub fn as_str(self) -> &'static str {
        match self {
            HistoryTier::RouteDay => "route_day",
            HistoryTier::Route => "route",
            HistoryTier::Global => "global",
            HistoryTier::ColdStart => "cold_start",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "route_day" => HistoryTier::RouteDay,
            "route" => HistoryTier::Route,
            "global" => HistoryTier::Global,
            "cold_start" => HistoryTier::ColdStart,
            _ => return None,
        })
    }
}

/// The engineered feature vector of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub route_id: String,
    pub flight_date: NaiveDate,
    pub record_date: NaiveDate,
    pub days_before_departure: u32,
    pub values: [f64; FEATURE_COUNT],
    pub history_tier: HistoryTier,
}

impl FeatureRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn plf(&self) -> f64 {
        self.values[idx::PLF]
    }
}

/// PLF in percentage points: `100 * booked / total`.
pub fn compute_plf(booked: u32, total: u32) -> Result<f64, FeatureError> {
    if total == 0 {
        return Err(FeatureError::ZeroCapacity);
    }
    Ok(100.0 * booked as f64 / total as f64)
}

/// Revenue passenger km and available seat km for one flight.
pub fn compute_rpk_ask(booked: u32, total: u32, distance_km: f64) -> (f64, f64) {
    (booked as f64 * distance_km, total as f64 * distance_km)
}

/// `(sin(2 pi v / p), cos(2 pi v / p))`.
pub fn cyclic_encode(value: i64, period: i64) -> (f64, f64) {
    assert!(period > 0, "period must be positive");
    let phase = 2.0 * std::f64::consts::PI * (value.rem_euclid(period)) as f64 / period as f64;
    phase.sin_cos()
}

/// Trailing mean of `plf` over the last `window` entries, inclusive.
/// `plf` must be ordered by record date; early entries average what exists.
pub fn rolling_avg_plf(plf: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    (0..plf.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let win = &plf[lo..=i];
            win.iter().sum::<f64>() / win.len() as f64
        })
        .collect()
}

/// Mean PLF of strictly earlier flights of `route_id` at offset `d`, with
/// the route/global/cold-start fallback chain. `rows` are raw snapshots.
pub fn plf_historical(
    rows: &[BookingSnapshot],
    route_id: &str,
    d: u32,
    asof: NaiveDate,
    cold_start_plf: f64,
) -> (f64, HistoryTier) {
    let mut same = (0.0, 0usize);
    let mut route = (0.0, 0usize);
    let mut global = (0.0, 0usize);
    for s in rows.iter().filter(|s| s.flight_date < asof && s.total_seats > 0) {
        let plf = 100.0 * s.booked_seats as f64 / s.total_seats as f64;
        global = (global.0 + plf, global.1 + 1);
        if s.route_id == route_id {
            route = (route.0 + plf, route.1 + 1);
            if s.days_before_departure == d {
                same = (same.0 + plf, same.1 + 1);
            }
        }
    }
    if same.1 > 0 {
        (same.0 / same.1 as f64, HistoryTier::RouteDay)
    } else if route.1 > 0 {
        (route.0 / route.1 as f64, HistoryTier::Route)
    } else if global.1 > 0 {
        (global.0 / global.1 as f64, HistoryTier::Global)
    } else {
        (cold_start_plf, HistoryTier::ColdStart)
    }
}

struct Calendar {
    day: u32,
    day_of_year: u32,
    week: u32,
    month: u32,
    dow: u32,
}

impl Calendar {
    fn of(date: NaiveDate) -> Self {
        Self {
            day: date.day(),
            day_of_year: date.ordinal(),
            week: date.iso_week().week(),
            month: date.month(),
            dow: date.weekday().num_days_from_monday(),
        }
    }

    /// dow, month, day-of-month, week-of-year sin/cos pairs.
    fn cyclic(&self) -> [(f64, f64); 4] {
        [
            cyclic_encode(self.dow as i64, 7),
            cyclic_encode(self.month as i64 - 1, 12),
            cyclic_encode(self.day as i64 - 1, 31),
            cyclic_encode(self.week as i64 - 1, 53),
        ]
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    sum: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Builds the 39 features for every snapshot.
///
/// Rows come out ordered by `(route_id, flight_date, days_before_departure
/// descending)`. Historical statistics are computed in a single sweep over
/// flight dates, so each row only sees flights departing strictly earlier.
pub fn build_feature_rows(
    snapshots: &[BookingSnapshot],
    routes: &[RouteMeta],
    holidays: &HolidayCalendar,
    config: &FeatureConfig,
) -> Result<Vec<FeatureRow>, FeatureError> {
    let meta: HashMap<&str, &RouteMeta> = routes.iter().map(|r| (r.route_id.as_str(), r)).collect();

    // flight_date -> route -> snapshots of that flight
    let mut flights: BTreeMap<NaiveDate, BTreeMap<&str, Vec<&BookingSnapshot>>> = BTreeMap::new();
    for s in snapshots {
        if !meta.contains_key(s.route_id.as_str()) {
            return Err(FeatureError::UnknownRoute(s.route_id.clone()));
        }
        if s.total_seats == 0 {
            return Err(FeatureError::ZeroCapacity);
        }
        flights.entry(s.flight_date).or_default().entry(&s.route_id).or_default().push(s);
    }

    let plf_of = |s: &BookingSnapshot| -> f64 {
        let p = 100.0 * s.booked_seats as f64 / s.total_seats as f64;
        if config.clip_plf { p.min(100.0) } else { p }
    };
    let is_weekend = |d: NaiveDate| config.weekend.contains(&d.weekday());
    let flag = |b: bool| if b { 1.0 } else { 0.0 };

    let mut by_route_day: HashMap<(&str, u32), Acc> = HashMap::new();
    let mut by_route: HashMap<&str, Acc> = HashMap::new();
    let mut global = Acc::default();
    let mut out = Vec::with_capacity(snapshots.len());

    for (flight_date, per_route) in &flights {
        let fd = Calendar::of(*flight_date);
        let mut finished: Vec<(&str, u32, f64)> = Vec::new();
        for (route_id, rows) in per_route {
            let route = meta[route_id];
            let mut rows = rows.clone();
            rows.sort_by_key(|s| std::cmp::Reverse(s.days_before_departure));
            let plf: Vec<f64> = rows.iter().map(|s| plf_of(s)).collect();
            let rolling = rolling_avg_plf(&plf, config.rolling_window);

            for (k, s) in rows.iter().enumerate() {
                let d = s.days_before_departure;
                let (hist, tier) = if let Some(m) = by_route_day.get(&(*route_id, d)).and_then(Acc::mean) {
                    (m, HistoryTier::RouteDay)
                } else if let Some(m) = by_route.get(route_id).and_then(Acc::mean) {
                    (m, HistoryTier::Route)
                } else if let Some(m) = global.mean() {
                    (m, HistoryTier::Global)
                } else {
                    (config.cold_start_plf, HistoryTier::ColdStart)
                };
                let rd = Calendar::of(s.record_date);
                let (rpk, ask) = compute_rpk_ask(s.booked_seats, s.total_seats, route.distance_km);

                let mut v = [0.0; FEATURE_COUNT];
                v[idx::PLF] = plf[k];
                v[idx::TOTAL_RPK] = rpk;
                v[idx::ROLLING_AVG_PLF] = rolling[k];
                v[idx::PLF_HISTORICAL] = hist;
                v[idx::DAYS_BEFORE_DEPARTURE] = d as f64;
                v[idx::RECORD_DATE_DAY] = rd.day as f64;
                v[idx::RECORD_DATE_DAY_OF_YEAR] = rd.day_of_year as f64;
                v[idx::FLIGHT_DATE_IS_HOLIDAY] = flag(holidays.contains(*flight_date));
                v[idx::FLIGHT_DATE_DAY] = fd.day as f64;
                v[idx::FLIGHT_DATE_WEEK] = fd.week as f64;
                v[idx::FLIGHT_DATE_DAY_OF_YEAR] = fd.day_of_year as f64;
                v[idx::FLIGHT_DATE_IS_WEEKEND] = flag(is_weekend(*flight_date));
                v[idx::TOTAL_ASK] = ask;
                v[idx::BOOKED_SEATS] = s.booked_seats as f64;
                v[idx::TOTAL_SEATS] = s.total_seats as f64;
                v[idx::DISTANCE_KM] = route.distance_km;
                v[idx::FLIGHT_DATE_MONTH] = fd.month as f64;
                v[idx::RECORD_DATE_MONTH] = rd.month as f64;
                v[idx::RECORD_DATE_WEEK] = rd.week as f64;
                v[idx::FLIGHT_DATE_DOW] = fd.dow as f64;
                v[idx::RECORD_DATE_DOW] = rd.dow as f64;
                v[idx::RECORD_DATE_IS_HOLIDAY] = flag(holidays.contains(s.record_date));
                v[idx::RECORD_DATE_IS_WEEKEND] = flag(is_weekend(s.record_date));
                for (j, (sin, cos)) in fd.cyclic().into_iter().chain(rd.cyclic()).enumerate() {
                    v[idx::CYCLIC_START + 2 * j] = sin;
                    v[idx::CYCLIC_START + 2 * j + 1] = cos;
                }

                out.push(FeatureRow {
                    route_id: s.route_id.clone(),
                    flight_date: *flight_date,
                    record_date: s.record_date,
                    days_before_departure: d,
                    values: v,
                    history_tier: tier,
                });
                finished.push((route_id, d, plf[k]));
            }
        }
        // flights on this date become history only for later dates
        for (route_id, d, p) in finished {
            by_route_day.entry((route_id, d)).or_default().add(p);
            by_route.entry(route_id).or_default().add(p);
            global.add(p);
        }
    }

    out.sort_by(|a, b| {
        (&a.route_id, a.flight_date, std::cmp::Reverse(a.days_before_departure))
            .cmp(&(&b.route_id, b.flight_date, std::cmp::Reverse(b.days_before_departure)))
    });
    Ok(out)
}
