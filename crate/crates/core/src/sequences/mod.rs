//! Horizontal/vertical window construction, chronological splitting and
//! train-only standardisation.

mod cache;
mod split;
mod sweep;

#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::features::roster::{TABLE_HORIZONTAL, TABLE_VERTICAL};
use crate::features::{feature_index, FeatureRow};
use crate::neural::Tensor;

pub use cache::{read_sample_cache, write_manifest, write_sample_cache};
pub use split::{chronological_split, Scaler, SplitCorpus, Standardizer, DEFAULT_RATIOS};
pub use sweep::{window_sweep, write_sweep_csv, SweepConfig, SweepRow};

#[derive(Debug, thiserror::Error)]
pub enum SequenceError {
    #[error("insufficient history for {route_id} {flight_date} at d={d}: {detail}")]
    InsufficientHistory { route_id: String, flight_date: NaiveDate, d: u32, detail: String },
    #[error("partition {0} is empty")]
    EmptyPartition(&'static str),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("sample cache: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Feature columns of each stream, in tensor column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub horizontal: Vec<String>,
    pub vertical: Vec<String>,
}

impl FeatureSet {
    /// The fixed 8 horizontal and 9 vertical columns.
    pub fn table() -> Self {
        Self {
            horizontal: TABLE_HORIZONTAL.iter().map(|s| s.to_string()).collect(),
            vertical: TABLE_VERTICAL.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn resolve(&self) -> Result<(Vec<usize>, Vec<usize>), SequenceError> {
        let lookup = |names: &[String]| -> Result<Vec<usize>, SequenceError> {
            if names.is_empty() {
                return Err(SequenceError::InvalidWindow("a stream needs at least one feature".into()));
            }
            names.iter().map(|n| feature_index(n).ok_or_else(|| SequenceError::UnknownFeature(n.clone()))).collect()
        };
        Ok((lookup(&self.horizontal)?, lookup(&self.vertical)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Horizontal window length `H`.
    pub horizontal: usize,
    /// Vertical window length `V`.
    pub vertical: usize,
    /// Gap between consecutive vertical flights; 1 takes every flight.
    pub stride: usize,
    pub d_range: Vec<u32>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { horizontal: 3, vertical: 3, stride: 1, d_range: (0..=21).collect() }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.horizontal == 0 || self.vertical == 0 || self.stride == 0 {
            return Err(SequenceError::InvalidWindow(format!(
                "H={}, V={}, s={} must all be at least 1",
                self.horizontal, self.vertical, self.stride
            )));
        }
        if self.d_range.is_empty() {
            return Err(SequenceError::InvalidWindow("empty d range".into()));
        }
        Ok(())
    }
}

/// One model input: both windows plus the departure-day PLF target.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub route_id: String,
    pub flight_date: NaiveDate,
    pub days_before_departure: u32,
    /// `H x F_h`, oldest row first.
    pub horizontal: Tensor,
    /// `V x F_v`, oldest flight first.
    pub vertical: Tensor,
    pub target_plf: f64,
    /// PLF observed at `d`, the persistence forecast.
    pub naive_plf: f64,
}

#[derive(Debug, Default)]
struct RouteIndex {
    /// Row index per flight date, addressed by `d`.
    flights: BTreeMap<NaiveDate, Vec<Option<usize>>>,
    /// Sorted flight dates having a row at each `d`.
    by_d: HashMap<u32, Vec<NaiveDate>>,
}

/// Read-only lookup structure over a feature table.
#[derive(Debug)]
pub struct FeatureIndex<'a> {
    rows: &'a [FeatureRow],
    routes: BTreeMap<&'a str, RouteIndex>,
}

impl<'a> FeatureIndex<'a> {
    pub fn new(rows: &'a [FeatureRow]) -> Self {
        let mut routes: BTreeMap<&str, RouteIndex> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            let entry = routes.entry(r.route_id.as_str()).or_default();
            let slots = entry.flights.entry(r.flight_date).or_default();
            let d = r.days_before_departure as usize;
            if slots.len() <= d {
                slots.resize(d + 1, None);
            }
            slots[d] = Some(i);
        }
        for idx in routes.values_mut() {
            for (&fd, slots) in &idx.flights {
                for (d, s) in slots.iter().enumerate() {
                    if s.is_some() {
                        idx.by_d.entry(d as u32).or_default().push(fd);
                    }
                }
            }
        }
        Self { rows, routes }
    }

    pub fn row(&self, route_id: &str, flight_date: NaiveDate, d: u32) -> Option<&'a FeatureRow> {
        let slots = self.routes.get(route_id)?.flights.get(&flight_date)?;
        slots.get(d as usize).copied().flatten().map(|i| &self.rows[i])
    }

    /// Every `(route, flight_date)` pair, ordered by route then date.
    pub fn flights(&self) -> impl Iterator<Item = (&'a str, NaiveDate)> + '_ {
        self.routes.iter().flat_map(|(r, idx)| idx.flights.keys().map(move |fd| (*r, *fd)))
    }

    /// Flight dates of `route_id` with a row at exactly `d`, ascending.
    pub fn dates_at(&self, route_id: &str, d: u32) -> &[NaiveDate] {
        self.routes.get(route_id).and_then(|r| r.by_d.get(&d)).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn stack(rows: &[&FeatureRow], cols: &[usize]) -> Tensor {
    let data = rows.iter().flat_map(|r| cols.iter().map(move |&c| r.values[c])).collect();
    Tensor::from_vec(&[rows.len(), cols.len()], data).expect("consistent shape")
}

/// Rows of one flight at `d + H - 1, ..., d`, oldest first.
pub fn build_horizontal(
    index: &FeatureIndex<'_>,
    route_id: &str,
    flight_date: NaiveDate,
    d: u32,
    h: usize,
    cols: &[usize],
) -> Result<Tensor, SequenceError> {
    let mut rows = Vec::with_capacity(h);
    for k in (0..h as u32).rev() {
        let row = index.row(route_id, flight_date, d + k).ok_or_else(|| SequenceError::InsufficientHistory {
            route_id: route_id.to_string(),
            flight_date,
            d,
            detail: format!("no snapshot at d={}", d + k),
        })?;
        rows.push(row);
    }
    Ok(stack(&rows, cols))
}

/// Rows at exactly `d` from the `v` most recent earlier flights of the
/// route, taking every `stride`-th one counting back from the most recent.
pub fn build_vertical(
    index: &FeatureIndex<'_>,
    route_id: &str,
    flight_date: NaiveDate,
    d: u32,
    v: usize,
    stride: usize,
    cols: &[usize],
) -> Result<Tensor, SequenceError> {
    let dates = index.dates_at(route_id, d);
    let earlier = dates.partition_point(|x| *x < flight_date);
    let needed = (v - 1) * stride + 1;
    if earlier < needed {
        return Err(SequenceError::InsufficientHistory {
            route_id: route_id.to_string(),
            flight_date,
            d,
            detail: format!("{earlier} earlier flights at d={d}, need {needed}"),
        });
    }
    let rows: Vec<&FeatureRow> = (0..v)
        .rev()
        .map(|k| {
            let fd = dates[earlier - 1 - k * stride];
            index.row(route_id, fd, d).expect("indexed date has a row")
        })
        .collect();
    Ok(stack(&rows, cols))
}

/// Why candidate `(flight, d)` pairs were not turned into samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub missing_target: usize,
    pub insufficient_horizontal: usize,
    pub insufficient_vertical: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.missing_target + self.insufficient_horizontal + self.insufficient_vertical
    }
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub samples: Vec<SequenceSample>,
    pub skipped: SkipCounts,
}

/// One sample per flight and `d` in the configured range where both windows
/// exist and the flight has a departure-day row. Samples are ordered by
/// flight date, route, then `d` descending.
pub fn assemble_samples(
    rows: &[FeatureRow],
    window: &WindowConfig,
    features: &FeatureSet,
) -> Result<Assembly, SequenceError> {
    window.validate()?;
    let (hcols, vcols) = features.resolve()?;
    let index = FeatureIndex::new(rows);
    let mut d_range = window.d_range.clone();
    d_range.sort_unstable_by(|a, b| b.cmp(a));
    d_range.dedup();
    let mut samples = Vec::new();
    let mut skipped = SkipCounts::default();
    for (route, fd) in index.flights() {
        let target = index.row(route, fd, 0).map(FeatureRow::plf);
        for &d in &d_range {
            let Some(at_d) = index.row(route, fd, d) else { continue };
            let Some(target_plf) = target else {
                skipped.missing_target += 1;
                continue;
            };
            let Ok(horizontal) = build_horizontal(&index, route, fd, d, window.horizontal, &hcols) else {
                skipped.insufficient_horizontal += 1;
                continue;
            };
            let Ok(vertical) = build_vertical(&index, route, fd, d, window.vertical, window.stride, &vcols) else {
                skipped.insufficient_vertical += 1;
                continue;
            };
            samples.push(SequenceSample {
                route_id: route.to_string(),
                flight_date: fd,
                days_before_departure: d,
                horizontal,
                vertical,
                target_plf,
                naive_plf: at_d.plf(),
            });
        }
    }
    samples.sort_by(|a, b| {
        (a.flight_date, &a.route_id, std::cmp::Reverse(a.days_before_departure)).cmp(&(
            b.flight_date,
            &b.route_id,
            std::cmp::Reverse(b.days_before_departure),
        ))
    });
    Ok(Assembly { samples, skipped })
}
