//! Horizon and route-category breakdowns of test-set predictions.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{subset_metrics, EvalError, MetricSet};
use crate::ingest::{Frequency, Haul, Reach, RouteMeta, RouteTags, Service};
use crate::sequences::SequenceSample;

/// What the reports need to know about one test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub route_id: String,
    pub flight_date: NaiveDate,
    pub days_before_departure: u32,
    pub actual_plf: f64,
    pub naive_plf: f64,
}

impl From<&SequenceSample> for EvalRecord {
    fn from(s: &SequenceSample) -> Self {
        Self {
            route_id: s.route_id.clone(),
            flight_date: s.flight_date,
            days_before_departure: s.days_before_departure,
            actual_plf: s.target_plf,
            naive_plf: s.naive_plf,
        }
    }
}

pub fn eval_records(samples: &[SequenceSample]) -> Vec<EvalRecord> {
    samples.iter().map(EvalRecord::from).collect()
}

/// Test-set predictions of one model, aligned with the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPredictions {
    pub model: String,
    pub predictions: Vec<f64>,
}

fn check_aligned(models: &[ModelPredictions], samples: &[EvalRecord]) -> Result<(), EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    for m in models {
        if m.predictions.len() != samples.len() {
            return Err(EvalError::LengthMismatch {
                pred: m.predictions.len(),
                actual: samples.len(),
                naive: samples.len(),
            });
        }
    }
    Ok(())
}

fn actual_naive(samples: &[EvalRecord]) -> (Vec<f64>, Vec<f64>) {
    (samples.iter().map(|s| s.actual_plf).collect(), samples.iter().map(|s| s.naive_plf).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonCell {
    pub model: String,
    pub d: u32,
    pub n: usize,
    /// `None` for an empty cell.
    pub metrics: Option<MetricSet>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    /// Grouped by model, then ascending `d`.
    pub cells: Vec<HorizonCell>,
}

impl HorizonReport {
    pub fn model<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a HorizonCell> + 'a {
        self.cells.iter().filter(move |c| c.model == name)
    }

    /// Sample-weighted MAE over the cells of `model` with `d` in `range`.
    pub fn mean_mae(&self, model: &str, range: std::ops::RangeInclusive<u32>) -> Option<f64> {
        let (sum, n) = self
            .model(model)
            .filter(|c| range.contains(&c.d))
            .filter_map(|c| c.metrics.map(|m| (m.mae * m.n as f64, m.n)))
            .fold((0.0, 0), |(s, k), (x, n)| (s + x, k + n));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Metrics per model and days-before-departure.
pub fn horizon_analysis(
    models: &[ModelPredictions],
    samples: &[EvalRecord],
    d_range: &[u32],
) -> Result<HorizonReport, EvalError> {
    check_aligned(models, samples)?;
    let (actual, naive) = actual_naive(samples);
    let mut by_d: BTreeMap<u32, Vec<usize>> = d_range.iter().map(|&d| (d, Vec::new())).collect();
    for (i, s) in samples.iter().enumerate() {
        if let Some(v) = by_d.get_mut(&s.days_before_departure) {
            v.push(i);
        }
    }
    let mut cells = Vec::new();
    for m in models {
        for (&d, idx) in &by_d {
            cells.push(HorizonCell {
                model: m.model.clone(),
                d,
                n: idx.len(),
                metrics: subset_metrics(idx, &m.predictions, &actual, &naive),
            });
        }
    }
    Ok(HorizonReport { cells })
}

/// The four route category pairs.
pub const CATEGORY_PAIRS: [&str; 4] = ["reach", "service", "frequency", "haul"];

fn tags_of(pair: &str) -> Vec<&'static str> {
    match pair {
        "reach" => Reach::ALL.iter().map(|t| t.as_str()).collect(),
        "service" => Service::ALL.iter().map(|t| t.as_str()).collect(),
        "frequency" => Frequency::ALL.iter().map(|t| t.as_str()).collect(),
        _ => Haul::ALL.iter().map(|t| t.as_str()).collect(),
    }
}

fn tag_of(tags: &RouteTags, pair: &str) -> &'static str {
    match pair {
        "reach" => tags.reach.as_str(),
        "service" => tags.service.as_str(),
        "frequency" => tags.frequency.as_str(),
        _ => tags.haul.as_str(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCell {
    pub model: String,
    pub pair: String,
    pub tag: String,
    pub n: usize,
    pub metrics: Option<MetricSet>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    /// Grouped by model, then pair, then tag.
    pub cells: Vec<CategoryCell>,
}

impl CategoryReport {
    pub fn cell(&self, model: &str, pair: &str, tag: &str) -> Option<&CategoryCell> {
        self.cells.iter().find(|c| c.model == model && c.pair == pair && c.tag == tag)
    }
}

/// Metrics per model and route tag, for each of the four tag pairs.
pub fn category_report(
    models: &[ModelPredictions],
    samples: &[EvalRecord],
    routes: &[RouteMeta],
) -> Result<CategoryReport, EvalError> {
    check_aligned(models, samples)?;
    let meta: BTreeMap<&str, &RouteTags> = routes.iter().map(|r| (r.route_id.as_str(), &r.tags)).collect();
    let tags: Vec<&RouteTags> = samples
        .iter()
        .map(|s| meta.get(s.route_id.as_str()).copied().ok_or_else(|| EvalError::UnknownRoute(s.route_id.clone())))
        .collect::<Result<_, _>>()?;
    let (actual, naive) = actual_naive(samples);
    let mut cells = Vec::new();
    for m in models {
        for pair in CATEGORY_PAIRS {
            for tag in tags_of(pair) {
                let idx: Vec<usize> = (0..samples.len()).filter(|&i| tag_of(tags[i], pair) == tag).collect();
                cells.push(CategoryCell {
                    model: m.model.clone(),
                    pair: pair.into(),
                    tag: tag.into(),
                    n: idx.len(),
                    metrics: subset_metrics(&idx, &m.predictions, &actual, &naive),
                });
            }
        }
    }
    Ok(CategoryReport { cells })
}
