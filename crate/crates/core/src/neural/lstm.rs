use rand_chacha::ChaCha8Rng;

use super::params::xavier;
use super::tensor::gemm;
use super::{ParamId, Params, Tensor};

/// A time-major batch: `steps[t]` is a `batch x width` row-major block.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub batch: usize,
    pub width: usize,
    pub steps: Vec<Vec<f64>>,
}

impl SeqBatch {
    pub fn zeros(batch: usize, width: usize, len: usize) -> Self {
        Self { batch, width, steps: vec![vec![0.0; batch * width]; len] }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Builds a batch from per-sample `[T, width]` tensors.
    pub fn from_samples(samples: &[&Tensor]) -> Self {
        let batch = samples.len();
        let (len, width) = (samples[0].rows(), samples[0].cols());
        let mut out = Self::zeros(batch, width, len);
        for (b, s) in samples.iter().enumerate() {
            debug_assert_eq!(s.shape(), &[len, width]);
            for t in 0..len {
                out.steps[t][b * width..(b + 1) * width].copy_from_slice(s.row(t));
            }
        }
        out
    }

    /// Sample-major copy: `batch x len x width`.
    pub fn to_sample_major(&self) -> Vec<f64> {
        let (len, w) = (self.len(), self.width);
        let mut out = vec![0.0; self.batch * len * w];
        for (t, step) in self.steps.iter().enumerate() {
            for b in 0..self.batch {
                let dst = (b * len + t) * w;
                out[dst..dst + w].copy_from_slice(&step[b * w..(b + 1) * w]);
            }
        }
        out
    }

    pub fn from_sample_major(data: &[f64], batch: usize, len: usize, width: usize) -> Self {
        let mut out = Self::zeros(batch, width, len);
        for (t, step) in out.steps.iter_mut().enumerate() {
            for b in 0..batch {
                let src = (b * len + t) * width;
                step[b * width..(b + 1) * width].copy_from_slice(&data[src..src + width]);
            }
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step for a single sample. Weights are `w: [4H, I]`, `u: [4H, H]`,
/// `b: [4H]`, gate blocks ordered input, forget, output, candidate.
pub fn lstm_cell(x: &[f64], h_prev: &[f64], c_prev: &[f64], w: &Tensor, u: &Tensor, b: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let hidden = h_prev.len();
    let mut z = b.data().to_vec();
    for (r, zr) in z.iter_mut().enumerate() {
        *zr += w.row(r).iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        *zr += u.row(r).iter().zip(h_prev).map(|(a, v)| a * v).sum::<f64>();
    }
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hidden + j]);
        let o = sigmoid(z[2 * hidden + j]);
        let g = z[3 * hidden + j].tanh();
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    (h, c)
}

#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

/// Intermediates kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: SeqBatch,
    /// `hs[t]` is the state entering step `t`; `hs[T]` is the final state.
    hs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    /// Activated gates per step, `batch x 4H`.
    gates: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

impl LstmLayer {
    pub fn new(params: &mut Params, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = params.add(format!("{prefix}.w"), xavier(rng, &[4 * hidden, input], input, 4 * hidden));
        let u = params.add(format!("{prefix}.u"), xavier(rng, &[4 * hidden, hidden], hidden, 4 * hidden));
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = params.add(format!("{prefix}.b"), bias);
        Self { input, hidden, w, u, b }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden + 1)
    }

    pub fn weights<'a>(&self, p: &'a Params) -> (&'a Tensor, &'a Tensor, &'a Tensor) {
        (p.get(self.w), p.get(self.u), p.get(self.b))
    }

    pub fn forward(&self, p: &Params, xs: &SeqBatch) -> (SeqBatch, LstmCache) {
        let (bsz, hd, len) = (xs.batch, self.hidden, xs.len());
        let (w, u, b) = self.weights(p);
        let mut hs = Vec::with_capacity(len + 1);
        let mut cs = Vec::with_capacity(len + 1);
        hs.push(vec![0.0; bsz * hd]);
        cs.push(vec![0.0; bsz * hd]);
        let mut gates = Vec::with_capacity(len);
        let mut tanh_c = Vec::with_capacity(len);
        let mut out = Vec::with_capacity(len);
        for t in 0..len {
            let mut z = vec![0.0; bsz * 4 * hd];
            for row in z.chunks_mut(4 * hd) {
                row.copy_from_slice(b.data());
            }
            gemm(bsz, self.input, 4 * hd, 1.0, &xs.steps[t], false, w.data(), true, 1.0, &mut z);
            gemm(bsz, hd, 4 * hd, 1.0, &hs[t], false, u.data(), true, 1.0, &mut z);
            let mut h = vec![0.0; bsz * hd];
            let mut c = vec![0.0; bsz * hd];
            let mut tc = vec![0.0; bsz * hd];
            let c_prev = &cs[t];
            for bi in 0..bsz {
                let zr = &mut z[bi * 4 * hd..(bi + 1) * 4 * hd];
                for j in 0..hd {
                    zr[j] = sigmoid(zr[j]);
                    zr[hd + j] = sigmoid(zr[hd + j]);
                    zr[2 * hd + j] = sigmoid(zr[2 * hd + j]);
                    zr[3 * hd + j] = zr[3 * hd + j].tanh();
                    let k = bi * hd + j;
                    c[k] = zr[hd + j] * c_prev[k] + zr[j] * zr[3 * hd + j];
                    tc[k] = c[k].tanh();
                    h[k] = zr[2 * hd + j] * tc[k];
                }
            }
            out.push(h.clone());
            hs.push(h);
            cs.push(c);
            gates.push(z);
            tanh_c.push(tc);
        }
        let output = SeqBatch { batch: bsz, width: hd, steps: out };
        (output, LstmCache { inputs: xs.clone(), hs, cs, gates, tanh_c })
    }

    /// Backpropagation through time. `dhs[t]` is the loss gradient with
    /// respect to the output at step `t`; returns the input gradients.
    pub fn backward(&self, p: &Params, cache: &LstmCache, dhs: &SeqBatch, grads: &mut Params) -> SeqBatch {
        let (bsz, hd, len) = (cache.inputs.batch, self.hidden, cache.inputs.len());
        let (w, u, _) = self.weights(p);
        let mut dw = vec![0.0; 4 * hd * self.input];
        let mut du = vec![0.0; 4 * hd * hd];
        let mut db = vec![0.0; 4 * hd];
        let mut dxs = SeqBatch::zeros(bsz, self.input, len);
        let mut dh_next = vec![0.0; bsz * hd];
        let mut dc_next = vec![0.0; bsz * hd];
        let mut dz = vec![0.0; bsz * 4 * hd];
        for t in (0..len).rev() {
            let g = &cache.gates[t];
            let tc = &cache.tanh_c[t];
            let c_prev = &cache.cs[t];
            for bi in 0..bsz {
                for j in 0..hd {
                    let k = bi * hd + j;
                    let gr = bi * 4 * hd;
                    let (ig, fg, og, cg) = (g[gr + j], g[gr + hd + j], g[gr + 2 * hd + j], g[gr + 3 * hd + j]);
                    let dh = dhs.steps[t][k] + dh_next[k];
                    let dc = dc_next[k] + dh * og * (1.0 - tc[k] * tc[k]);
                    dz[gr + j] = dc * cg * ig * (1.0 - ig);
                    dz[gr + hd + j] = dc * c_prev[k] * fg * (1.0 - fg);
                    dz[gr + 2 * hd + j] = dh * tc[k] * og * (1.0 - og);
                    dz[gr + 3 * hd + j] = dc * ig * (1.0 - cg * cg);
                    dc_next[k] = dc * fg;
                }
            }
            gemm(4 * hd, bsz, self.input, 1.0, &dz, true, &cache.inputs.steps[t], false, 1.0, &mut dw);
            gemm(4 * hd, bsz, hd, 1.0, &dz, true, &cache.hs[t], false, 1.0, &mut du);
            for row in dz.chunks(4 * hd) {
                for (a, v) in db.iter_mut().zip(row) {
                    *a += v;
                }
            }
            gemm(bsz, 4 * hd, self.input, 1.0, &dz, false, w.data(), false, 0.0, &mut dxs.steps[t]);
            gemm(bsz, 4 * hd, hd, 1.0, &dz, false, u.data(), false, 0.0, &mut dh_next);
        }
        for (id, d) in [(self.w, dw), (self.u, du), (self.b, db)] {
            for (a, v) in grads.get_mut(id).data_mut().iter_mut().zip(d) {
                *a += v;
            }
        }
        dxs
    }
}
