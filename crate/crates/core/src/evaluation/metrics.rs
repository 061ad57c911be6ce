use serde::{Deserialize, Serialize};

use super::EvalError;

/// Actuals at or below this magnitude are left out of MAPE.
pub const MAPE_ZERO_THRESHOLD: f64 = 1e-6;

/// The six forecast metrics. MAPE is a fraction, not a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub n: usize,
    pub mae: f64,
    /// `None` when every actual is near zero.
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when the naive forecast is exact.
    pub mase: Option<f64>,
    /// `None` when the actuals are constant.
    pub r2: Option<f64>,
}

impl MetricSet {
    /// Metric values in a fixed order, for tables and aggregation.
    pub fn values(&self) -> [Option<f64>; 6] {
        [Some(self.mae), self.mape, Some(self.mse), Some(self.rmse), self.mase, self.r2]
    }
}

pub const METRIC_NAMES: [&str; 6] = ["mae", "mape", "mse", "rmse", "mase", "r2"];

fn check(pred: &[f64], actual: &[f64], naive: &[f64]) -> Result<(), EvalError> {
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    if pred.len() != actual.len() || naive.len() != actual.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), actual: actual.len(), naive: naive.len() });
    }
    Ok(())
}

fn mean_abs_error(pred: &[f64], actual: &[f64]) -> f64 {
    pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / actual.len() as f64
}

/// MAE of `pred` over MAE of the persistence forecast `naive`.
pub fn mase(pred: &[f64], actual: &[f64], naive: &[f64]) -> Result<f64, EvalError> {
    check(pred, actual, naive)?;
    let denom = mean_abs_error(naive, actual);
    if denom == 0.0 {
        return Err(EvalError::ZeroNaive);
    }
    Ok(mean_abs_error(pred, actual) / denom)
}

pub fn compute_metrics(pred: &[f64], actual: &[f64], naive: &[f64]) -> Result<MetricSet, EvalError> {
    check(pred, actual, naive)?;
    let n = actual.len();
    let nf = n as f64;
    let mae = mean_abs_error(pred, actual);
    let mse = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / nf;

    let mut ape = 0.0;
    let mut kept = 0usize;
    for (p, a) in pred.iter().zip(actual) {
        if a.abs() > MAPE_ZERO_THRESHOLD {
            ape += (p - a).abs() / a.abs();
            kept += 1;
        }
    }
    let mape = (kept > 0).then(|| ape / kept as f64);

    let mean = actual.iter().sum::<f64>() / nf;
    let sst: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    let r2 = (sst > 0.0).then(|| 1.0 - mse * nf / sst);

    let mase = match mase(pred, actual, naive) {
        Ok(v) => Some(v),
        Err(EvalError::ZeroNaive) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricSet { n, mae, mape, mape_excluded: n - kept, mse, rmse: mse.sqrt(), mase, r2 })
}

/// Metrics over a subset of sample positions.
pub fn subset_metrics(idx: &[usize], pred: &[f64], actual: &[f64], naive: &[f64]) -> Option<MetricSet> {
    if idx.is_empty() {
        return None;
    }
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    compute_metrics(&pick(pred), &pick(actual), &pick(naive)).ok()
}
