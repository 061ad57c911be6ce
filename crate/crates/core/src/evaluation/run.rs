//! Trains and scores models over several seeds in parallel slots.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{baseline_fit_predict, compute_metrics, BaselineConfig, BaselineKind, EvalError, MetricSet, ModelPredictions};
use crate::neural::{InputDims, Model, ModelSpec, Variant};
use crate::sequences::SplitCorpus;
use crate::training::{fit, predict_plf, TrainConfig, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelKind {
    Neural(Variant),
    Baseline(BaselineKind),
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Neural(v) => v.as_str(),
            ModelKind::Baseline(b) => b.as_str(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(v) = s.parse::<Variant>() {
            return Ok(ModelKind::Neural(v));
        }
        s.parse::<BaselineKind>().map(ModelKind::Baseline)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    /// Overrides the epoch budget of every neural fit.
    pub max_epochs: Option<usize>,
    /// Parallel model slots.
    pub jobs: usize,
    pub baseline: BaselineConfig,
}

impl Default for RunPlan {
    fn default() -> Self {
        Self {
            models: Variant::ALL
                .into_iter()
                .map(ModelKind::Neural)
                .chain(BaselineKind::ALL.into_iter().map(ModelKind::Baseline))
                .collect(),
            seeds: vec![0, 1, 2],
            max_epochs: None,
            jobs: 1,
            baseline: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: ModelKind,
    pub seed: u64,
    /// Test-set predictions in percentage points.
    pub predictions: Vec<f64>,
    pub metrics: MetricSet,
    pub log: Option<TrainLog>,
    pub network: Option<Model>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn predictions(&self) -> ModelPredictions {
        ModelPredictions { model: self.model.name().to_string(), predictions: self.predictions.clone() }
    }
}

/// Input shape of the corpus windows.
pub fn input_dims(corpus: &SplitCorpus) -> Result<InputDims, EvalError> {
    let s = corpus.train.first().ok_or(EvalError::Empty)?;
    Ok(InputDims {
        horizontal_steps: s.horizontal.rows(),
        horizontal_features: s.horizontal.cols(),
        vertical_steps: s.vertical.rows(),
        vertical_features: s.vertical.cols(),
    })
}

/// Fits one model with one seed and scores it on the test partition.
pub fn run_one(corpus: &SplitCorpus, model: ModelKind, seed: u64, plan: &RunPlan) -> Result<RunOutcome, EvalError> {
    match model {
        ModelKind::Neural(variant) => {
            let spec = ModelSpec::preset(variant, input_dims(corpus)?);
            let mut cfg = TrainConfig::for_spec(&spec, seed);
            if let Some(e) = plan.max_epochs {
                cfg.max_epochs = e;
            }
            let (network, log) = fit(&spec, corpus, &cfg)?;
            let predictions = predict_plf(&network, &corpus.test, &corpus.scaler)?;
            let actual: Vec<f64> = corpus.test.iter().map(|s| s.target_plf).collect();
            let naive: Vec<f64> = corpus.test.iter().map(|s| s.naive_plf).collect();
            let metrics = compute_metrics(&predictions, &actual, &naive)?;
            Ok(RunOutcome { model, seed, predictions, metrics, log: Some(log), network: Some(network), warnings: Vec::new() })
        }
        ModelKind::Baseline(kind) => {
            let mut cfg = plan.baseline.clone();
            cfg.forest.seed = seed;
            let out = baseline_fit_predict(kind, &corpus.train, &corpus.test, &cfg)?;
            Ok(RunOutcome {
                model,
                seed,
                predictions: out.predictions,
                metrics: out.metrics,
                log: None,
                network: None,
                warnings: out.warnings,
            })
        }
    }
}

/// Every (model, seed) pair of the plan. Results are ordered by model as
/// listed, then seed, whatever the number of slots.
pub fn run_models(corpus: &SplitCorpus, plan: &RunPlan) -> Result<Vec<RunOutcome>, EvalError> {
    let tasks: Vec<(ModelKind, u64)> =
        plan.models.iter().flat_map(|&m| plan.seeds.iter().map(move |&s| (m, s))).collect();
    let results: Mutex<Vec<Option<Result<RunOutcome, EvalError>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let slots = plan.jobs.clamp(1, tasks.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..slots {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(model, seed)) = tasks.get(i) else { break };
                log::info!("fitting {model} seed {seed}");
                let out = run_one(corpus, model, seed, plan);
                results.lock().expect("no poisoned slot")[i] = Some(out);
            });
        }
    });
    results.into_inner().expect("no poisoned slot").into_iter().map(|r| r.expect("task ran")).collect()
}
