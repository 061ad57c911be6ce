//! Mini-batch MSE training with Adam or RMSprop, learning-rate reduction on
//! plateau, early stopping and best-weight restoration.

mod callbacks;
mod optim;


use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Batch, Mode, Model, ModelSpec, NeuralError, OptimizerKind, Params};
use crate::sequences::{Scaler, SequenceSample, SplitCorpus};

pub use callbacks::{simulate_callbacks, CallbackTrace, Callbacks, EpochOutcome};
pub use optim::{
    adam_step, mse_loss, rmsprop_step, AdamState, Optimizer, RmspropState, ADAM_BETA1, ADAM_BETA2, EPSILON,
    RMSPROP_RHO,
};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: {detail}")]
    DivergenceDetected { epoch: usize, detail: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Sequence(#[from] crate::sequences::SequenceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    /// Smallest validation-loss decrease counted as an improvement.
    pub min_delta: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 5,
            plateau_patience: 3,
            plateau_factor: 0.5,
            min_lr: 1e-5,
            min_delta: 1e-7,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults with the optimizer and learning rate of `spec`.
    pub fn for_spec(spec: &ModelSpec, seed: u64) -> Self {
        Self { optimizer: spec.optimizer, learning_rate: spec.learning_rate, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.early_stop_patience == 0 || self.plateau_patience == 0 {
            return bad("patience values must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.min_lr > 0.0 && self.learning_rate > 0.0 && self.min_delta >= 0.0) {
            return bad("min_lr and learning_rate must be positive, min_delta non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
    pub restored: bool,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.lr));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Builds a model batch from samples.
pub fn make_batch(samples: &[&SequenceSample]) -> Result<Batch, NeuralError> {
    let h: Vec<_> = samples.iter().map(|s| &s.horizontal).collect();
    let v: Vec<_> = samples.iter().map(|s| &s.vertical).collect();
    Batch::new(&h, &v)
}

const EVAL_BATCH: usize = 256;

/// Predictions in percentage points for standardised samples.
pub fn predict_plf(model: &Model, samples: &[SequenceSample], scaler: &Scaler) -> Result<Vec<f64>, NeuralError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        out.extend(model.predict(&make_batch(&refs)?)?.into_iter().map(|z| scaler.unscale_target(z)));
    }
    Ok(out)
}

/// Mean squared error on the standardised target scale.
pub fn scaled_loss(model: &Model, samples: &[SequenceSample], scaler: &Scaler) -> Result<f64, NeuralError> {
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        let pred = model.predict(&make_batch(&refs)?)?;
        let target: Vec<f64> = chunk.iter().map(|s| scaler.scale_target(s.target_plf)).collect();
        total += mse_loss(&pred, &target).0 * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

fn shuffle_seed(seed: u64) -> u64 {
    seed ^ 0x5DEE_CE66_D1CE_5EED
}

/// Trains `spec` on the training partition, monitoring validation loss.
/// The returned model carries the weights of the best validation epoch.
pub fn fit(spec: &ModelSpec, corpus: &SplitCorpus, cfg: &TrainConfig) -> Result<(Model, TrainLog), TrainError> {
    cfg.validate()?;
    if corpus.train.is_empty() || corpus.validation.is_empty() {
        return Err(TrainError::InvalidConfig("training and validation partitions must be non-empty".into()));
    }
    let mut model = Model::new(spec.clone(), cfg.seed)?;
    let mut optimizer = Optimizer::new(cfg.optimizer, model.params());
    let mut callbacks = Callbacks::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(cfg.seed));
    let scaler = &corpus.scaler;
    let targets: Vec<f64> = corpus.train.iter().map(|s| scaler.scale_target(s.target_plf)).collect();
    let mut order: Vec<usize> = (0..corpus.train.len()).collect();
    let mut best: Option<(f64, usize, Params)> = None;
    let mut epochs = Vec::new();
    let mut early_stopped = false;
    for epoch in 1..=cfg.max_epochs {
        let lr = callbacks.lr();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let refs: Vec<&SequenceSample> = idx.iter().map(|&i| &corpus.train[i]).collect();
            let y: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let batch = make_batch(&refs)?;
            let (pred, cache) = match model.forward(&batch, Mode::Train, &mut rng) {
                Ok(x) => x,
                Err(NeuralError::NonFinite) => {
                    return Err(TrainError::DivergenceDetected { epoch, detail: "non-finite prediction".into() })
                }
                Err(e) => return Err(e.into()),
            };
            let (loss, grad) = mse_loss(&pred, &y);
            if !loss.is_finite() {
                return Err(TrainError::DivergenceDetected { epoch, detail: format!("training loss {loss}") });
            }
            sum += loss * idx.len() as f64;
            let grads = model.backward(&cache, &grad);
            optimizer.step(model.params_mut(), &grads, lr);
        }
        let train_loss = sum / corpus.train.len() as f64;
        let val_loss = match scaled_loss(&model, &corpus.validation, scaler) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Err(TrainError::DivergenceDetected { epoch, detail: format!("validation loss {v}") }),
            Err(NeuralError::NonFinite) => {
                return Err(TrainError::DivergenceDetected { epoch, detail: "non-finite validation prediction".into() })
            }
            Err(e) => return Err(e.into()),
        };
        log::debug!("{} epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr}", spec.variant);
        epochs.push(EpochRecord { epoch, train_loss, val_loss, lr });
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, model.params().clone()));
        }
        if callbacks.on_epoch_end(val_loss).stop {
            early_stopped = true;
            break;
        }
    }
    let (best_val_loss, best_epoch, params) = best.expect("at least one epoch");
    *model.params_mut() = params;
    let log = TrainLog { stopped_epoch: epochs.len(), epochs, best_epoch, best_val_loss, early_stopped, restored: true };
    Ok((model, log))
}

/// Checkpoint location for one training run.
pub fn checkpoint_path(root: &Path, spec: &ModelSpec, seed: u64) -> std::path::PathBuf {
    root.join("runs").join(spec.variant.as_str()).join(seed.to_string()).join("best.ckpt")
}
