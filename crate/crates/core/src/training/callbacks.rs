use super::TrainConfig;

/// Learning-rate reduction on plateau and early stopping, both monitoring
/// validation loss. Each keeps its own best value and wait counter; at the
/// end of an epoch the plateau rule runs first.
#[derive(Debug, Clone)]
pub struct Callbacks {
    min_delta: f64,
    plateau_patience: usize,
    plateau_factor: f64,
    min_lr: f64,
    stop_patience: usize,
    plateau_best: f64,
    plateau_wait: usize,
    stop_best: f64,
    stop_wait: usize,
    lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutcome {
    pub improved: bool,
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub stop: bool,
}

impl Callbacks {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            min_delta: cfg.min_delta,
            plateau_patience: cfg.plateau_patience,
            plateau_factor: cfg.plateau_factor,
            min_lr: cfg.min_lr,
            stop_patience: cfg.early_stop_patience,
            plateau_best: f64::INFINITY,
            plateau_wait: 0,
            stop_best: f64::INFINITY,
            stop_wait: 0,
            lr: cfg.learning_rate,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn on_epoch_end(&mut self, val_loss: f64) -> EpochOutcome {
        if val_loss < self.plateau_best - self.min_delta {
            self.plateau_best = val_loss;
            self.plateau_wait = 0;
        } else {
            self.plateau_wait += 1;
            if self.plateau_wait >= self.plateau_patience && self.lr > self.min_lr {
                self.lr = (self.lr * self.plateau_factor).max(self.min_lr);
                self.plateau_wait = 0;
            }
        }
        let improved = val_loss < self.stop_best - self.min_delta;
        if improved {
            self.stop_best = val_loss;
            self.stop_wait = 0;
        } else {
            self.stop_wait += 1;
        }
        EpochOutcome { improved, lr: self.lr, stop: self.stop_wait >= self.stop_patience }
    }
}

/// Learning rate in force during each epoch, the 1-based stop epoch and the
/// 1-based best epoch for a scripted validation-loss sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CallbackTrace {
    pub lrs: Vec<f64>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

pub fn simulate_callbacks(val_losses: &[f64], cfg: &TrainConfig) -> CallbackTrace {
    let mut cb = Callbacks::new(cfg);
    let mut lrs = Vec::new();
    let mut best = (f64::INFINITY, 0);
    for (i, &loss) in val_losses.iter().enumerate().take(cfg.max_epochs) {
        lrs.push(cb.lr());
        if loss < best.0 {
            best = (loss, i + 1);
        }
        if cb.on_epoch_end(loss).stop {
            break;
        }
    }
    CallbackTrace { stopped_epoch: lrs.len(), lrs, best_epoch: best.1 }
}
