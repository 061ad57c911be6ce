//! Forecast metrics, horizon and route-category breakdowns, flat-vector
//! baselines and seed-aggregated leaderboards.
//!
//! MASE divides by the MAE of the persistence forecast: the PLF observed at
//! the prediction day, i.e. the newest row of the horizontal window.

mod baselines;
mod leaderboard;
mod metrics;
mod output;
pub mod plot;
mod reports;
mod run;

#[cfg(test)]
mod tests;

pub use baselines::{
    baseline_fit_predict, flatten, planted_nonlinearity, BaselineConfig, BaselineKind, BaselineOutcome,
    SINGULAR_FALLBACK_LAMBDA,
};
pub use leaderboard::{leaderboard, LeaderboardRow};
pub use metrics::{compute_metrics, mase, subset_metrics, MetricSet, MAPE_ZERO_THRESHOLD, METRIC_NAMES};
pub use output::{
    write_categories_csv, write_category_plots, write_horizon_csv, write_horizon_plots, write_leaderboard_csv,
    write_runs_csv,
};
pub use reports::{
    category_report, eval_records, horizon_analysis, CategoryCell, CategoryReport, HorizonCell, HorizonReport, ModelPredictions,
    CATEGORY_PAIRS, EvalRecord,
};
pub use run::{input_dims, run_models, run_one, ModelKind, RunOutcome, RunPlan};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("length mismatch: {pred} predictions, {actual} actuals, {naive} naive forecasts")]
    LengthMismatch { pred: usize, actual: usize, naive: usize },
    #[error("naive forecast is exact; MASE is undefined")]
    ZeroNaive,
    #[error("least squares system is singular")]
    SingularSystem,
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("route `{0}` has no metadata")]
    UnknownRoute(String),
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
