use crate::neural::{OptimizerKind, Params};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const RMSPROP_RHO: f64 = 0.9;
pub const EPSILON: f64 = 1e-8;

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            loss += r * r;
            2.0 * r / n
        })
        .collect();
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads.tensors()).zip(&mut state.m).zip(&mut state.v) {
        for (((p, g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub mean_square: Vec<Vec<f64>>,
}

impl RmspropState {
    pub fn new(params: &Params) -> Self {
        Self { mean_square: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect() }
    }
}

pub fn rmsprop_step(params: &mut Params, grads: &Params, state: &mut RmspropState, lr: f64) {
    for ((p, g), s) in params.tensors_mut().iter_mut().zip(grads.tensors()).zip(&mut state.mean_square) {
        for ((p, g), s) in p.data_mut().iter_mut().zip(g.data()).zip(s.iter_mut()) {
            *s = RMSPROP_RHO * *s + (1.0 - RMSPROP_RHO) * g * g;
            *p -= lr * g / (s.sqrt() + EPSILON);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Rmsprop(RmspropState),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &Params) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(params)),
            OptimizerKind::Rmsprop => Optimizer::Rmsprop(RmspropState::new(params)),
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        match self {
            Optimizer::Adam(s) => adam_step(params, grads, s, lr),
            Optimizer::Rmsprop(s) => rmsprop_step(params, grads, s, lr),
        }
    }
}
