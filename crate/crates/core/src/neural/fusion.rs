use rand_chacha::ChaCha8Rng;

use super::params::xavier;
use super::tensor::gemm;
use super::{ParamId, Params, Tensor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gated fusion of two `D`-vectors: `g = sigmoid(W [a; b] + bias)`,
/// `out = g * a + (1 - g) * b`, with `W: [D, 2D]`.
pub fn gated_fuse(a: &[f64], b: &[f64], w: &Tensor, bias: &Tensor) -> Vec<f64> {
    let d = a.len();
    (0..d)
        .map(|j| {
            let row = w.row(j);
            let z = bias.data()[j]
                + row[..d].iter().zip(a).map(|(x, y)| x * y).sum::<f64>()
                + row[d..].iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let g = sigmoid(z);
            g * a[j] + (1.0 - g) * b[j]
        })
        .collect()
}

/// Residual fusion: the attended representation plus the original one.
pub fn residual_fuse(attended: &[f64], original: &[f64]) -> Vec<f64> {
    attended.iter().zip(original).map(|(a, o)| a + o).collect()
}

#[derive(Debug, Clone)]
pub struct GateLayer {
    pub dim: usize,
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub struct GateCache {
    x: Vec<f64>,
    g: Vec<f64>,
}

impl GateLayer {
    pub fn new(params: &mut Params, prefix: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = params.add(format!("{prefix}.w"), xavier(rng, &[dim, 2 * dim], 2 * dim, dim));
        let b = params.add(format!("{prefix}.b"), Tensor::zeros(&[dim]));
        Self { dim, w, b }
    }

    pub fn param_count(dim: usize) -> usize {
        dim * (2 * dim + 1)
    }

    pub fn weights<'a>(&self, p: &'a Params) -> (&'a Tensor, &'a Tensor) {
        (p.get(self.w), p.get(self.b))
    }

    pub fn forward(&self, p: &Params, a: &[f64], b: &[f64], batch: usize) -> (Vec<f64>, GateCache) {
        let d = self.dim;
        let mut x = vec![0.0; batch * 2 * d];
        for i in 0..batch {
            x[i * 2 * d..i * 2 * d + d].copy_from_slice(&a[i * d..(i + 1) * d]);
            x[i * 2 * d + d..(i + 1) * 2 * d].copy_from_slice(&b[i * d..(i + 1) * d]);
        }
        let mut g = vec![0.0; batch * d];
        for row in g.chunks_mut(d) {
            row.copy_from_slice(p.get(self.b).data());
        }
        gemm(batch, 2 * d, d, 1.0, &x, false, p.get(self.w).data(), true, 1.0, &mut g);
        g.iter_mut().for_each(|v| *v = sigmoid(*v));
        let out = g.iter().zip(a.iter().zip(b)).map(|(gv, (av, bv))| gv * av + (1.0 - gv) * bv).collect();
        (out, GateCache { x, g })
    }

    /// Returns the gradients for `a` and `b`.
    pub fn backward(&self, p: &Params, cache: &GateCache, dout: &[f64], batch: usize, grads: &mut Params) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut dz = vec![0.0; batch * d];
        for i in 0..batch {
            for j in 0..d {
                let k = i * d + j;
                let (av, bv) = (cache.x[i * 2 * d + j], cache.x[i * 2 * d + d + j]);
                let g = cache.g[k];
                dz[k] = dout[k] * (av - bv) * g * (1.0 - g);
            }
        }
        gemm(d, batch, 2 * d, 1.0, &dz, true, &cache.x, false, 1.0, grads.get_mut(self.w).data_mut());
        let db = grads.get_mut(self.b).data_mut();
        for row in dz.chunks(d) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut dx = vec![0.0; batch * 2 * d];
        gemm(batch, d, 2 * d, 1.0, &dz, false, p.get(self.w).data(), false, 0.0, &mut dx);
        let mut da = vec![0.0; batch * d];
        let mut dbv = vec![0.0; batch * d];
        for i in 0..batch {
            for j in 0..d {
                let k = i * d + j;
                let g = cache.g[k];
                da[k] = dx[i * 2 * d + j] + dout[k] * g;
                dbv[k] = dx[i * 2 * d + d + j] + dout[k] * (1.0 - g);
            }
        }
        (da, dbv)
    }
}
