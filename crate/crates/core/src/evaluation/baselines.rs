//! Non-sequential baselines on flattened windows.

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, EvalError, MetricSet};
use crate::featsel::{ForestConfig, RandomForest};
use crate::linalg::ridge_fit;
use crate::neural::Tensor;
use crate::sequences::SequenceSample;

/// Ridge strength used when ordinary least squares is singular.
pub const SINGULAR_FALLBACK_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Linear,
    Ridge,
    RandomForest,
    Naive,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] =
        [BaselineKind::Linear, BaselineKind::Ridge, BaselineKind::RandomForest, BaselineKind::Naive];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Linear => "linear",
            BaselineKind::Ridge => "ridge",
            BaselineKind::RandomForest => "random_forest",
            BaselineKind::Naive => "naive",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| EvalError::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub ridge_lambda: f64,
    pub forest: ForestConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { ridge_lambda: 1.0, forest: ForestConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub kind: BaselineKind,
    pub predictions: Vec<f64>,
    pub metrics: MetricSet,
    pub warnings: Vec<String>,
}

/// Horizontal window rows followed by vertical window rows.
pub fn flatten(sample: &SequenceSample) -> Vec<f64> {
    sample.horizontal.data().iter().chain(sample.vertical.data()).copied().collect()
}

/// Fits on `train` and predicts `test`. Targets are in percentage points.
pub fn baseline_fit_predict(
    kind: BaselineKind,
    train: &[SequenceSample],
    test: &[SequenceSample],
    cfg: &BaselineConfig,
) -> Result<BaselineOutcome, EvalError> {
    if train.is_empty() || test.is_empty() {
        return Err(EvalError::Empty);
    }
    let x_test: Vec<Vec<f64>> = test.iter().map(flatten).collect();
    let mut warnings = Vec::new();
    let predictions: Vec<f64> = match kind {
        BaselineKind::Naive => test.iter().map(|s| s.naive_plf).collect(),
        BaselineKind::Linear | BaselineKind::Ridge => {
            let x: Vec<Vec<f64>> = train.iter().map(flatten).collect();
            let y: Vec<f64> = train.iter().map(|s| s.target_plf).collect();
            let lambda = if kind == BaselineKind::Ridge { cfg.ridge_lambda } else { 0.0 };
            let fit = match ridge_fit(&x, &y, lambda) {
                Some(f) => f,
                None if kind == BaselineKind::Linear => {
                    let w = format!(
                        "least squares system is singular on collinear inputs; refitting with ridge {SINGULAR_FALLBACK_LAMBDA:e}"
                    );
                    log::warn!("{w}");
                    warnings.push(w);
                    ridge_fit(&x, &y, SINGULAR_FALLBACK_LAMBDA).ok_or(EvalError::SingularSystem)?
                }
                None => return Err(EvalError::SingularSystem),
            };
            x_test.iter().map(|r| fit.predict_row(r)).collect()
        }
        BaselineKind::RandomForest => {
            let width = x_test[0].len();
            let columns: Vec<Vec<f64>> = (0..width).map(|j| train.iter().map(|s| flatten_at(s, j)).collect()).collect();
            let y: Vec<f64> = train.iter().map(|s| s.target_plf).collect();
            let forest = RandomForest::fit(&columns, &y, &cfg.forest);
            x_test.iter().map(|r| forest.predict_row(r)).collect()
        }
    };
    let actual: Vec<f64> = test.iter().map(|s| s.target_plf).collect();
    let naive: Vec<f64> = test.iter().map(|s| s.naive_plf).collect();
    let metrics = compute_metrics(&predictions, &actual, &naive)?;
    Ok(BaselineOutcome { kind, predictions, metrics, warnings })
}

fn flatten_at(s: &SequenceSample, j: usize) -> f64 {
    let h = s.horizontal.len();
    if j < h {
        s.horizontal.data()[j]
    } else {
        s.vertical.data()[j - h]
    }
}

/// Samples whose target depends on the windows through a bounded
/// nonlinearity: a sine of one input and an interaction of two others,
/// with no linear trend in any input. Inputs are independent standard
/// normals shaped `3 x 8` and `3 x 9`.
pub fn planted_nonlinearity(n: usize, seed: u64) -> Vec<SequenceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date");
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    (0..n)
        .map(|i| {
            let h: Vec<f64> = (0..24).map(|_| normal()).collect();
            let v: Vec<f64> = (0..27).map(|_| normal()).collect();
            let target = 60.0 + 15.0 * (2.0 * h[16]).sin() * (1.0 + h[16].abs()) + 10.0 * h[17] * v[18] + 0.5 * normal();
            SequenceSample {
                route_id: "P".into(),
                flight_date: start + Days::new(i as u64),
                days_before_departure: 0,
                horizontal: Tensor::from_vec(&[3, 8], h).expect("shape"),
                vertical: Tensor::from_vec(&[3, 9], v).expect("shape"),
                target_plf: target,
                naive_plf: 60.0,
            }
        })
        .collect()
}
