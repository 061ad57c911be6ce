use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::xavier;
use super::tensor::gemm;
use super::{ParamId, Params, Tensor};

/// Fully connected layer `y = x W^T + b` with `W: [out, in]`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub input: usize,
    pub output: usize,
    w: ParamId,
    b: ParamId,
}

impl DenseLayer {
    pub fn new(params: &mut Params, prefix: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = params.add(format!("{prefix}.w"), xavier(rng, &[output, input], input, output));
        let b = params.add(format!("{prefix}.b"), Tensor::zeros(&[output]));
        Self { input, output, w, b }
    }

    pub fn param_count(input: usize, output: usize) -> usize {
        output * (input + 1)
    }

    pub fn forward(&self, p: &Params, x: &[f64], batch: usize) -> Vec<f64> {
        let mut y = vec![0.0; batch * self.output];
        for row in y.chunks_mut(self.output) {
            row.copy_from_slice(p.get(self.b).data());
        }
        gemm(batch, self.input, self.output, 1.0, x, false, p.get(self.w).data(), true, 1.0, &mut y);
        y
    }

    pub fn backward(&self, p: &Params, x: &[f64], dy: &[f64], batch: usize, grads: &mut Params) -> Vec<f64> {
        gemm(self.output, batch, self.input, 1.0, dy, true, x, false, 1.0, grads.get_mut(self.w).data_mut());
        let db = grads.get_mut(self.b).data_mut();
        for row in dy.chunks(self.output) {
            for (a, v) in db.iter_mut().zip(row) {
                *a += v;
            }
        }
        let mut dx = vec![0.0; batch * self.input];
        gemm(batch, self.output, self.input, 1.0, dy, false, p.get(self.w).data(), false, 0.0, &mut dx);
        dx
    }
}

pub(crate) fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `grad` where the ReLU output was zero.
pub(crate) fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted dropout. In training each unit is kept with probability
/// `1 - rate` and scaled by `1 / (1 - rate)`; inference is the identity.
/// Returns the output and the applied per-unit multiplier.
pub fn dropout(x: &[f64], rate: f64, mode: Mode, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    if mode == Mode::Infer || rate == 0.0 {
        return (x.to_vec(), vec![1.0; x.len()]);
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = x.iter().map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
    (x.iter().zip(&mask).map(|(a, m)| a * m).collect(), mask)
}
