//! Seeded synthetic booking corpus.
//!
//! Each flight draws a final demand from route, season, holiday and weekend
//! effects plus lognormal flight-level noise, then books it along a
//! cumulative curve made of three parts:
//!
//! - a power-law ramp from sale opening (steep exponent on domestic routes,
//!   which keeps early bookings near zero),
//! - a late surge concentrated in the final week,
//! - an early bump on transit routes, giving their double-peak shape.
//!
//! Daily new bookings are Poisson around the curve increments. During the
//! final week each booked seat cancels with probability `churn_rate` per
//! day, so booked seats are non-decreasing only in expectation.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{
    route_distance, Airport, BookingSnapshot, Frequency, Haul, HolidayCalendar, IngestError,
    Reach, RouteMeta, RouteTags, Service, MAX_DAYS_BEFORE_DEPARTURE,
};

/// Days before departure at which the late surge and churn window opens.
const LATE_WINDOW_DAYS: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of routes; the four built-in route templates are cycled.
    pub routes: usize,
    /// Flights per route. Each flight yields 31 snapshots (d = 30..0).
    pub flights_per_route: usize,
    /// Departure date of the last flight on every route.
    pub end_date: NaiveDate,
    /// Mean final load (fraction of the usual seat count) before effects.
    pub base_demand: f64,
    /// Lognormal sigma of the per-flight demand multiplier.
    pub demand_noise: f64,
    /// Relative demand uplift for flights departing on a holiday.
    pub holiday_boost: f64,
    /// Relative demand uplift for weekend departures (Friday/Saturday).
    pub weekend_boost: f64,
    /// Amplitude of the annual demand cycle.
    pub seasonal_amplitude: f64,
    /// Share of final demand booked in the final week.
    pub late_surge: f64,
    /// Share of final demand booked in the early transit peak.
    pub transit_double_peak: f64,
    /// Daily cancellation probability per booked seat in the final week.
    pub churn_rate: f64,
    /// Probability that a flight is operated by a non-standard aircraft.
    pub aircraft_swap_rate: f64,
    /// Lag-one autocorrelation of the demand shock between consecutive
    /// flights of a route.
    pub demand_persistence: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            routes: 4,
            // 413 flights x 31 snapshots = 12,803 records per route
            flights_per_route: 413,
            end_date: NaiveDate::from_ymd_opt(2024, 12, 31).expect("valid date"),
            base_demand: 0.82,
            demand_noise: 0.22,
            holiday_boost: 0.25,
            weekend_boost: 0.08,
            seasonal_amplitude: 0.12,
            late_surge: 0.35,
            transit_double_peak: 0.30,
            churn_rate: 0.02,
            aircraft_swap_rate: 0.05,
            demand_persistence: 0.7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |msg: String| Err(IngestError::InvalidConfig(msg));
        if self.routes == 0 {
            return bad("routes must be positive".into());
        }
        if self.flights_per_route == 0 {
            return bad("flights_per_route must be positive".into());
        }
        if !(self.base_demand > 0.0 && self.base_demand.is_finite()) {
            return bad(format!("base_demand must be positive, got {}", self.base_demand));
        }
        for (name, v) in [
            ("demand_noise", self.demand_noise),
            ("holiday_boost", self.holiday_boost),
            ("weekend_boost", self.weekend_boost),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("late_surge", self.late_surge),
            ("transit_double_peak", self.transit_double_peak),
            ("churn_rate", self.churn_rate),
            ("aircraft_swap_rate", self.aircraft_swap_rate),
            ("demand_persistence", self.demand_persistence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.late_surge + self.transit_double_peak > 1.0 {
            return bad("late_surge + transit_double_peak must not exceed 1".into());
        }
        Ok(())
    }

    /// Parses a TOML document; absent keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let cfg: Self = toml::from_str(text).map_err(|e| IngestError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator config serialises")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub snapshots: Vec<BookingSnapshot>,
    pub airports: Vec<Airport>,
    pub routes: Vec<RouteMeta>,
    pub holidays: HolidayCalendar,
}

struct Aircraft {
    code: &'static str,
    seats: u32,
}

struct RouteTemplate {
    origin: &'static str,
    destination: &'static str,
    weekly_frequency: u32,
    reach: Reach,
    service: Service,
    /// Multiplier on `base_demand`.
    load: f64,
    /// Multiplier on `demand_noise`.
    noise: f64,
    /// Exponent of the sale-opening ramp.
    ramp_power: f64,
    /// First entry is the usual aircraft; the rest are swap-ins.
    fleet: &'static [Aircraft],
}

const AIRPORTS: [(&str, f64, f64); 7] = [
    ("DAC", 23.8433, 90.3978),
    ("CGP", 22.2496, 91.8133),
    ("SPD", 25.7592, 88.9089),
    ("ZYL", 24.9632, 91.8668),
    ("DXB", 25.2528, 55.3644),
    ("LHR", 51.4700, -0.4543),
    ("JED", 21.6796, 39.1565),
];

const TEMPLATES: [RouteTemplate; 4] = [
    RouteTemplate {
        origin: "DAC",
        destination: "CGP",
        weekly_frequency: 21,
        reach: Reach::Domestic,
        service: Service::Direct,
        load: 0.72,
        noise: 1.3,
        ramp_power: 2.6,
        fleet: &[Aircraft { code: "ATR72", seats: 70 }, Aircraft { code: "DH8D", seats: 74 }, Aircraft { code: "B738", seats: 162 }],
    },
    RouteTemplate {
        origin: "DAC",
        destination: "DXB",
        weekly_frequency: 7,
        reach: Reach::International,
        service: Service::Direct,
        load: 1.0,
        noise: 1.0,
        ramp_power: 1.3,
        fleet: &[Aircraft { code: "B738", seats: 162 }, Aircraft { code: "B788", seats: 271 }, Aircraft { code: "B77W", seats: 419 }],
    },
    RouteTemplate {
        origin: "DAC",
        destination: "LHR",
        weekly_frequency: 3,
        reach: Reach::International,
        service: Service::Transit,
        load: 1.05,
        noise: 1.0,
        ramp_power: 1.2,
        fleet: &[Aircraft { code: "B788", seats: 271 }, Aircraft { code: "B77W", seats: 419 }],
    },
    RouteTemplate {
        origin: "CGP",
        destination: "SPD",
        weekly_frequency: 4,
        reach: Reach::Domestic,
        service: Service::Transit,
        load: 0.68,
        noise: 1.3,
        ramp_power: 2.4,
        fleet: &[Aircraft { code: "DH8D", seats: 74 }, Aircraft { code: "ATR72", seats: 70 }],
    },
];

fn haul_for(distance_km: f64) -> Haul {
    if distance_km < 1500.0 {
        Haul::Short
    } else if distance_km < 4000.0 {
        Haul::Mid
    } else {
        Haul::Long
    }
}

/// Weekdays operated by low-frequency routes.
fn operating_days(weekly_frequency: u32) -> Vec<Weekday> {
    use Weekday::*;
    let all = [Sun, Tue, Thu, Sat, Mon, Wed, Fri];
    all.iter().copied().take(weekly_frequency.clamp(1, 7) as usize).collect()
}

fn schedule(end: NaiveDate, weekly_frequency: u32, flights: usize) -> Vec<NaiveDate> {
    let days = if weekly_frequency >= 7 { vec![] } else { operating_days(weekly_frequency) };
    let mut out = Vec::with_capacity(flights);
    let mut date = end;
    while out.len() < flights {
        if days.is_empty() || days.contains(&date.weekday()) {
            out.push(date);
        }
        date = date.pred_opt().expect("date in range");
    }
    out.reverse();
    out
}

/// Fixed national holidays plus seeded movable festivals.
fn holiday_calendar(first_year: i32, last_year: i32, rng: &mut ChaCha8Rng) -> HolidayCalendar {
    const FIXED: [(u32, u32); 8] =
        [(2, 21), (3, 17), (3, 26), (4, 14), (5, 1), (8, 15), (12, 16), (12, 25)];
    let mut cal = HolidayCalendar::default();
    for year in first_year..=last_year {
        for (m, d) in FIXED {
            cal.dates.insert(NaiveDate::from_ymd_opt(year, m, d).expect("fixed holiday"));
        }
        // two three-day festivals and one single-day observance
        for len in [3u64, 3, 1] {
            let start_doy: u32 = rng.random_range(1..=360);
            let start = NaiveDate::from_yo_opt(year, start_doy).expect("day of year");
            for k in 0..len {
                cal.dates.insert(start + Days::new(k));
            }
        }
    }
    cal
}

/// Cumulative share of final demand booked by `d` days out (1 at d = 0).
fn booking_curve(d: u32, ramp_power: f64, late_surge: f64, early_peak: f64) -> f64 {
    let horizon = MAX_DAYS_BEFORE_DEPARTURE as f64;
    let ramp = ((horizon - d as f64) / horizon).powf(ramp_power);
    let late = if d < LATE_WINDOW_DAYS {
        (LATE_WINDOW_DAYS - d) as f64 / LATE_WINDOW_DAYS as f64
    } else {
        0.0
    };
    let bump = 1.0 / (1.0 + ((d as f64 - 24.0) / 1.5).exp());
    let bump0 = 1.0 / (1.0 + (-24.0f64 / 1.5).exp());
    (1.0 - late_surge - early_peak) * ramp + late_surge * late + early_peak * bump / bump0
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u32
}

/// Generates a corpus that is a pure function of `(config, seed)`.
pub fn generate_synthetic(config: &GeneratorConfig, seed: u64) -> Result<SyntheticCorpus, IngestError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let airports: Vec<Airport> = AIRPORTS
        .iter()
        .map(|&(iata, latitude, longitude)| Airport { iata: iata.into(), latitude, longitude })
        .collect();
    let airport = |code: &str| airports.iter().find(|a| a.iata == code).expect("known airport");

    let mut routes = Vec::with_capacity(config.routes);
    let mut schedules = Vec::with_capacity(config.routes);
    for r in 0..config.routes {
        let t = &TEMPLATES[r % TEMPLATES.len()];
        let distance_km = route_distance(airport(t.origin), airport(t.destination));
        routes.push(RouteMeta {
            route_id: format!("R{:02}", r + 1),
            origin: t.origin.into(),
            destination: t.destination.into(),
            distance_km,
            weekly_frequency: t.weekly_frequency,
            tags: RouteTags {
                reach: t.reach,
                service: t.service,
                frequency: Frequency::from_weekly(t.weekly_frequency),
                haul: haul_for(distance_km),
            },
        });
        schedules.push(schedule(config.end_date, t.weekly_frequency, config.flights_per_route));
    }

    let first_day = schedules
        .iter()
        .filter_map(|s| s.first())
        .min()
        .copied()
        .expect("non-empty schedule")
        - Days::new(MAX_DAYS_BEFORE_DEPARTURE as u64);
    let holidays = holiday_calendar(first_day.year(), config.end_date.year(), &mut rng);
    let near_holiday = |date: NaiveDate| -> f64 {
        if holidays.contains(date) {
            1.0
        } else if (1..=2).any(|k| holidays.contains(date + Days::new(k))) {
            0.5
        } else {
            0.0
        }
    };

    let mut snapshots = Vec::with_capacity(config.routes * config.flights_per_route * 31);
    for (r, dates) in schedules.iter().enumerate() {
        let t = &TEMPLATES[r % TEMPLATES.len()];
        let early_peak = if t.service == Service::Transit { config.transit_double_peak } else { 0.0 };
        let sigma = (config.demand_noise * t.noise).min(1.5);
        let route_id = &routes[r].route_id;
        let phi = config.demand_persistence;
        let mut shock: Option<f64> = None;
        for &flight_date in dates {
            let aircraft = if t.fleet.len() > 1 && rng.random::<f64>() < config.aircraft_swap_rate {
                &t.fleet[rng.random_range(1..t.fleet.len())]
            } else {
                &t.fleet[0]
            };
            let usual_seats = t.fleet[0].seats as f64;

            let doy = flight_date.ordinal() as f64;
            let season = 1.0
                + config.seasonal_amplitude * (2.0 * std::f64::consts::PI * (doy - 80.0) / 365.25).sin();
            let weekend = matches!(flight_date.weekday(), Weekday::Fri | Weekday::Sat);
            let eps: f64 = normal.sample(&mut rng);
            // stationary AR(1): unit variance whatever the persistence
            let z = shock.map_or(eps, |prev| phi * prev + (1.0 - phi * phi).sqrt() * eps);
            shock = Some(z);
            let demand = config.base_demand
                * t.load
                * season
                * (1.0 + config.holiday_boost * near_holiday(flight_date))
                * (1.0 + if weekend { config.weekend_boost } else { 0.0 })
                * (sigma * z - 0.5 * sigma * sigma).exp()
                * usual_seats;
            let ramp_power = t.ramp_power * (0.15 * normal.sample(&mut rng)).exp();

            let mut booked: u32 = 0;
            let mut prev_share = 0.0;
            for d in (0..=MAX_DAYS_BEFORE_DEPARTURE).rev() {
                let share = booking_curve(d, ramp_power, config.late_surge, early_peak);
                if d < LATE_WINDOW_DAYS && booked > 0 && config.churn_rate > 0.0 {
                    let cancelled = Binomial::new(booked as u64, config.churn_rate)
                        .expect("valid binomial")
                        .sample(&mut rng) as u32;
                    booked -= cancelled;
                }
                booked += poisson(&mut rng, demand * (share - prev_share).max(0.0));
                prev_share = share;
                let record_date = flight_date - Days::new(d as u64);
                snapshots.push(
                    BookingSnapshot::new(
                        route_id.clone(),
                        flight_date,
                        record_date,
                        booked,
                        aircraft.seats,
                        aircraft.code,
                    )
                    .expect("record precedes flight"),
                );
            }
        }
    }
    snapshots.sort_by(|a, b| {
        (&a.route_id, a.flight_date, a.days_before_departure)
            .cmp(&(&b.route_id, b.flight_date, b.days_before_departure))
    });

    Ok(SyntheticCorpus { snapshots, airports, routes, holidays })
}
