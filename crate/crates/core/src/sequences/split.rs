use serde::{Deserialize, Serialize};

use super::{FeatureSet, SequenceError, SequenceSample, WindowConfig};

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

/// Per-column `(x - mean) / std` with population std; constant columns
/// keep std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(width: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        let rows: Vec<&[f64]> = rows.collect();
        for r in &rows {
            n += 1;
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| if n > 0 { s / n as f64 } else { 0.0 }).collect();
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let std = sq
            .iter()
            .map(|q| {
                let s = if n > 0 { (q / n as f64).sqrt() } else { 0.0 };
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    pub fn scale_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn unscale_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Statistics fitted on the training partition only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub horizontal: Standardizer,
    pub vertical: Standardizer,
    /// Applied to the PLF target inside training; predictions are mapped
    /// back to percentage points.
    pub target: Standardizer,
}

impl Scaler {
    pub fn fit(train: &[SequenceSample]) -> Self {
        let fh = train[0].horizontal.cols();
        let fv = train[0].vertical.cols();
        let horizontal = Standardizer::fit(fh, train.iter().flat_map(|s| s.horizontal.data().chunks(fh)));
        let vertical = Standardizer::fit(fv, train.iter().flat_map(|s| s.vertical.data().chunks(fv)));
        let targets: Vec<[f64; 1]> = train.iter().map(|s| [s.target_plf]).collect();
        let target = Standardizer::fit(1, targets.iter().map(|t| t.as_slice()));
        Self { horizontal, vertical, target }
    }

    pub fn scale_sample(&self, s: &mut SequenceSample) {
        let fh = s.horizontal.cols();
        for row in s.horizontal.data_mut().chunks_mut(fh) {
            self.horizontal.scale_row(row);
        }
        let fv = s.vertical.cols();
        for row in s.vertical.data_mut().chunks_mut(fv) {
            self.vertical.scale_row(row);
        }
    }

    pub fn unscale_sample(&self, s: &mut SequenceSample) {
        let fh = s.horizontal.cols();
        for row in s.horizontal.data_mut().chunks_mut(fh) {
            self.horizontal.unscale_row(row);
        }
        let fv = s.vertical.cols();
        for row in s.vertical.data_mut().chunks_mut(fv) {
            self.vertical.unscale_row(row);
        }
    }

    pub fn scale_target(&self, plf: f64) -> f64 {
        (plf - self.target.mean[0]) / self.target.std[0]
    }

    pub fn unscale_target(&self, z: f64) -> f64 {
        z * self.target.std[0] + self.target.mean[0]
    }
}

/// Chronological partitions with standardised input windows. Targets and
/// naive forecasts stay in percentage points.
#[derive(Debug, Clone)]
pub struct SplitCorpus {
    pub train: Vec<SequenceSample>,
    pub validation: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub scaler: Scaler,
    pub features: FeatureSet,
    pub window: WindowConfig,
}

impl SplitCorpus {
    pub fn partitions(&self) -> [(&'static str, &[SequenceSample]); 3] {
        [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
    }
}

/// Moves a cut forward past every sample sharing the previous flight date,
/// so boundary ties stay in the earlier partition.
fn snap(samples: &[SequenceSample], mut cut: usize) -> usize {
    while cut > 0 && cut < samples.len() && samples[cut].flight_date == samples[cut - 1].flight_date {
        cut += 1;
    }
    cut
}

pub fn chronological_split(
    mut samples: Vec<SequenceSample>,
    ratios: [f64; 3],
    features: FeatureSet,
    window: WindowConfig,
) -> Result<SplitCorpus, SequenceError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SequenceError::InvalidRatios(format!("{ratios:?} must be positive and sum to 1")));
    }
    samples.sort_by(|a, b| a.flight_date.cmp(&b.flight_date));
    let n = samples.len();
    let c1 = snap(&samples, (ratios[0] * n as f64).round() as usize);
    let c2 = snap(&samples, ((ratios[0] + ratios[1]) * n as f64).round() as usize).max(c1);
    let test = samples.split_off(c2);
    let validation = samples.split_off(c1);
    let mut train = samples;
    for (name, part) in [("train", &train), ("validation", &validation), ("test", &test)] {
        if part.is_empty() {
            return Err(SequenceError::EmptyPartition(name));
        }
    }
    let scaler = Scaler::fit(&train);
    let mut validation = validation;
    let mut test = test;
    for s in train.iter_mut().chain(validation.iter_mut()).chain(test.iter_mut()) {
        scaler.scale_sample(s);
    }
    Ok(SplitCorpus { train, validation, test, scaler, features, window })
}
